"""Exact rationals, places of Q, valuations and log-norms.

Scalars are :class:`fractions.Fraction` throughout.  Logarithms of norms are
kept symbolic as integer/rational combinations of ``ln p`` so that every
comparison the rest of the package makes (drift ordering, gauge balls) is
decided exactly; floats only appear when a value is reported.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from functools import total_ordering
from typing import Iterable, Mapping, Union

import mpmath

RationalLike = Union[Fraction, int, str]

# precision (bits) of the archimedean cache used for reporting
ARCH_PREC = 128


class DomainError(ValueError):
    """Raised when an operation is applied outside its domain (e.g. v_p(0))."""


def as_rational(x: RationalLike) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return parse_rational(x)
    raise TypeError(f"cannot interpret {x!r} as an exact rational")


def parse_rational(text: str) -> Fraction:
    """Parse ``"n"``, ``"-n/d"``...; floats and zero denominators are rejected."""
    s = text.strip()
    if "/" in s:
        num, _, den = s.partition("/")
        try:
            n, d = int(num), int(den)
        except ValueError:
            raise ValueError(f"not a rational literal: {text!r}") from None
        if d == 0:
            raise ValueError(f"zero denominator in {text!r}")
        return Fraction(n, d)
    try:
        return Fraction(int(s))
    except ValueError:
        raise ValueError(f"not a rational literal: {text!r}") from None


def format_rational(q: Fraction) -> str:
    return str(Fraction(q))


# --- primes -----------------------------------------------------------------

class _Sieve:
    """Incrementally extended Eratosthenes sieve."""

    def __init__(self) -> None:
        self.limit = 1
        self.primes: list[int] = []

    def extend(self, limit: int) -> None:
        if limit <= self.limit:
            return
        limit = max(limit, 2 * self.limit, 1024)
        flags = bytearray([1]) * (limit + 1)
        flags[0:2] = b"\x00\x00"
        for i in range(2, math.isqrt(limit) + 1):
            if flags[i]:
                flags[i * i :: i] = bytearray(len(range(i * i, limit + 1, i)))
        self.primes = [i for i in range(2, limit + 1) if flags[i]]
        self.limit = limit

    def upto(self, n: int) -> list[int]:
        self.extend(n)
        return self.primes[: bisect_right(self.primes, n)]


_SIEVE = _Sieve()


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n < 1 << 20:
        _SIEVE.extend(n)
        i = bisect_right(_SIEVE.primes, n)
        return i > 0 and _SIEVE.primes[i - 1] == n
    return set(factor_integer(n)) == {n}


def factor_integer(n: int) -> dict[int, int]:
    """Trial-division factorization of ``|n|`` (n != 0)."""
    if n == 0:
        raise DomainError("cannot factor zero")
    n = abs(n)
    out: dict[int, int] = {}
    limit = 1024
    i = 0
    while True:
        primes = _SIEVE.upto(limit)
        while i < len(primes):
            p = primes[i]
            if p * p > n:
                if n > 1:
                    out[n] = out.get(n, 0) + 1
                return out
            while n % p == 0:
                n //= p
                out[p] = out.get(p, 0) + 1
            i += 1
        limit *= 2


def factor_rational(q: Fraction) -> dict[int, int]:
    """Map p -> v_p(q) for the finitely many p with v_p(q) != 0."""
    q = as_rational(q)
    if q == 0:
        raise DomainError("valuation of zero undefined")
    out = factor_integer(q.numerator)
    for p, e in factor_integer(q.denominator).items():
        out[p] = -e
    return out


# --- places -----------------------------------------------------------------

@total_ordering
@dataclass(frozen=True)
class Place:
    """A place of Q: a prime ``p`` or the archimedean place (``prime=None``)."""

    prime: int | None = None

    def __post_init__(self) -> None:
        if self.prime is not None and not is_prime(self.prime):
            raise ValueError(f"{self.prime} is not prime")

    @property
    def is_infinite(self) -> bool:
        return self.prime is None

    @classmethod
    def parse(cls, tag: str | int) -> Place:
        if isinstance(tag, int):
            return cls(tag)
        t = tag.strip().lower()
        if t in ("inf", "infinity", "oo", "∞"):
            return INF
        return cls(int(t))

    def __str__(self) -> str:
        return "inf" if self.prime is None else str(self.prime)

    def __lt__(self, other: Place) -> bool:
        # primes ascending, infinity last
        a = math.inf if self.prime is None else self.prime
        b = math.inf if other.prime is None else other.prime
        return a < b


INF = Place(None)


def valuation(q: RationalLike, p: Place | int) -> int:
    """v_p(q) for nonzero q."""
    q = as_rational(q)
    prime = p.prime if isinstance(p, Place) else p
    if prime is None:
        raise DomainError("the archimedean place has no valuation")
    if q == 0:
        raise DomainError("valuation of zero undefined")
    return _int_val(q.numerator, prime) - _int_val(q.denominator, prime)


def _int_val(n: int, p: int) -> int:
    # strip p^(2^i) greedily: O(log v) big-int divisions
    n = abs(n)
    if p == 2:
        return (n & -n).bit_length() - 1
    powers = []
    q = p
    while n % q == 0:
        powers.append(q)
        q = q * q
    e = 0
    for i in range(len(powers) - 1, -1, -1):
        if n % powers[i] == 0:
            n //= powers[i]
            e += 1 << i
    return e


def factor_support(q: RationalLike) -> set[int]:
    return set(factor_rational(as_rational(q)))


# --- symbolic logarithms ----------------------------------------------------

@dataclass(frozen=True)
class LogCombination:
    """The real number ``sum_p c_p ln p`` with rational coefficients.

    Logs of distinct primes are linearly independent over Q, so the value is
    zero exactly when every coefficient is; otherwise its sign is found by
    evaluating at increasing precision.
    """

    coeffs: Mapping[int, Fraction] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean = {p: Fraction(c) for p, c in self.coeffs.items() if c != 0}
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    @classmethod
    def of_rational(cls, q: RationalLike) -> LogCombination:
        """ln|q| (archimedean absolute value)."""
        return cls({p: Fraction(e) for p, e in factor_rational(as_rational(q)).items()})

    @classmethod
    def single(cls, p: int, c: RationalLike) -> LogCombination:
        return cls({p: as_rational(c)})

    def __add__(self, other: LogCombination) -> LogCombination:
        out = dict(self.coeffs)
        for p, c in other.coeffs.items():
            out[p] = out.get(p, Fraction(0)) + c
        return LogCombination(out)

    def __neg__(self) -> LogCombination:
        return LogCombination({p: -c for p, c in self.coeffs.items()})

    def __sub__(self, other: LogCombination) -> LogCombination:
        return self + (-other)

    def scale(self, k: RationalLike) -> LogCombination:
        k = as_rational(k)
        return LogCombination({p: k * c for p, c in self.coeffs.items()})

    def is_zero(self) -> bool:
        return not self.coeffs

    def coefficient(self, p: int) -> Fraction:
        return self.coeffs.get(p, Fraction(0))

    def evaluate(self, prec: int = ARCH_PREC) -> mpmath.mpf:
        with mpmath.workprec(prec):
            total = mpmath.mpf(0)
            for p, c in self.coeffs.items():
                total += mpmath.mpf(c.numerator) / c.denominator * mpmath.log(p)
            return +total

    def sign(self) -> int:
        if not self.coeffs:
            return 0
        prec = ARCH_PREC
        while True:
            v = self.evaluate(prec)
            scale = sum(abs(float(c)) for c in self.coeffs.values()) * 64
            if abs(v) > mpmath.ldexp(scale, -prec + 16):
                return 1 if v > 0 else -1
            # nonzero by independence of prime logs; tighten until resolved
            prec *= 2

    def __float__(self) -> float:
        return float(self.evaluate())

    def compare(self, other: LogCombination) -> int:
        return (self - other).sign()

    def __lt__(self, other: LogCombination) -> bool:
        return self.compare(other) < 0

    def __le__(self, other: LogCombination) -> bool:
        return self.compare(other) <= 0

    def __gt__(self, other: LogCombination) -> bool:
        return self.compare(other) > 0

    def __ge__(self, other: LogCombination) -> bool:
        return self.compare(other) >= 0


@dataclass(frozen=True)
class LogNorm:
    """``ln|q|_place``.

    At a prime the value is ``coefficient * ln p``; at infinity it is
    ``ln(arch_value)`` with a 128-bit float cache for display.
    """

    place: Place
    coefficient: Fraction | None = None
    arch_value: Fraction | None = None
    _cache: mpmath.mpf | None = field(default=None, compare=False, repr=False)

    @property
    def value(self) -> float:
        if self.place.is_infinite:
            return float(self.precise())
        return float(self.coefficient) * math.log(self.place.prime)

    def precise(self) -> mpmath.mpf:
        if self.place.is_infinite:
            if self._cache is None:
                with mpmath.workprec(ARCH_PREC):
                    a = self.arch_value
                    v = mpmath.log(mpmath.mpf(a.numerator)) - mpmath.log(a.denominator)
                object.__setattr__(self, "_cache", v)
            return self._cache
        with mpmath.workprec(ARCH_PREC):
            return mpmath.mpf(self.coefficient.numerator) / self.coefficient.denominator * mpmath.log(self.place.prime)

    def as_log_combination(self) -> LogCombination:
        if self.place.is_infinite:
            return LogCombination.of_rational(self.arch_value)
        return LogCombination.single(self.place.prime, self.coefficient)


def norm_log(q: RationalLike, place: Place) -> LogNorm:
    q = as_rational(q)
    if q == 0:
        raise DomainError("log-norm of zero undefined")
    if place.is_infinite:
        return LogNorm(place, arch_value=abs(q))
    return LogNorm(place, coefficient=Fraction(-valuation(q, place)))


def product_formula_check(q: RationalLike) -> bool:
    """Exact check that prod_p |q|_p * |q|_inf == 1."""
    q = as_rational(q)
    if q == 0:
        raise DomainError("product formula needs a nonzero rational")
    prod = Fraction(1)
    for p, e in factor_rational(q).items():
        prod *= Fraction(p) ** (-e)
    return prod * abs(q) == 1


def log_abs(q: Fraction) -> float:
    """Float ln|q| for rationals of any size."""
    q = abs(as_rational(q))
    return math.log(q.numerator) - math.log(q.denominator)


def primes_of(values: Iterable[Fraction]) -> set[int]:
    out: set[int] = set()
    for v in values:
        if v != 0:
            out |= factor_support(v)
    return out
