"""Finitely supported step measures, seeded walks and exact drift data."""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterator, Mapping, Sequence

from .rational import (
    INF,
    LogCombination,
    Place,
    as_rational,
    factor_rational,
    format_rational,
    log_abs,
    primes_of,
    valuation,
)
from .triangular import ShapeError, TriMatrix, multiply

SAMPLING_BITS = 64


class MeasureError(ValueError):
    """Invalid step measure; ``atom`` names the offending atom when known."""

    def __init__(self, message: str, atom: int | None = None) -> None:
        if atom is not None:
            message = f"atom {atom}: {message}"
        super().__init__(message)
        self.atom = atom


@dataclass(frozen=True)
class StepMeasure:
    atoms: tuple[tuple[TriMatrix, Fraction], ...]

    def __init__(self, atoms: Sequence[tuple[TriMatrix, Any]]) -> None:
        if not atoms:
            raise MeasureError("measure has no atoms")
        d = atoms[0][0].dim
        seen: dict[str, int] = {}
        clean = []
        for idx, (mat, w) in enumerate(atoms):
            w = as_rational(w)
            if mat.dim != d:
                raise MeasureError(f"dimension {mat.dim} differs from {d}", idx)
            if w <= 0:
                raise MeasureError(f"weight {w} is not positive", idx)
            if w < Fraction(1, 2**SAMPLING_BITS):
                raise MeasureError(f"weight {w} is below the 2^-64 sampling resolution", idx)
            key = mat.key()
            if key in seen:
                raise MeasureError(f"duplicate of atom {seen[key]}", idx)
            seen[key] = idx
            clean.append((mat, w))
        total = sum((w for _, w in clean), Fraction(0))
        if total != 1:
            raise MeasureError(f"weights sum to {total}, not 1")
        object.__setattr__(self, "atoms", tuple(clean))

    @property
    def dim(self) -> int:
        return self.atoms[0][0].dim

    @property
    def matrices(self) -> list[TriMatrix]:
        return [m for m, _ in self.atoms]

    @property
    def weights(self) -> list[Fraction]:
        return [w for _, w in self.atoms]

    @classmethod
    def dirac(cls, g: TriMatrix) -> StepMeasure:
        return cls([(g, 1)])

    @classmethod
    def uniform(cls, mats: Sequence[TriMatrix]) -> StepMeasure:
        return cls([(m, Fraction(1, len(mats))) for m in mats])

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> StepMeasure:
        d = data.get("dimension")
        atoms = data.get("atoms")
        if not isinstance(atoms, list) or not atoms:
            raise MeasureError("'atoms' must be a non-empty list")
        parsed = []
        for idx, atom in enumerate(atoms):
            try:
                mat = TriMatrix.from_json(atom["matrix"])
                w = as_rational(str(atom["weight"]))
            except (KeyError, TypeError, ValueError, ShapeError) as exc:
                raise MeasureError(str(exc), idx) from None
            if d is not None and mat.dim != d:
                raise MeasureError(f"matrix has dimension {mat.dim}, config says {d}", idx)
            parsed.append((mat, w))
        return cls(parsed)

    def to_json(self) -> dict[str, Any]:
        return {
            "dimension": self.dim,
            "atoms": [{"matrix": m.to_json(), "weight": format_rational(w)} for m, w in self.atoms],
        }

    @property
    def thresholds(self) -> list[int]:
        """Integer cut points: draw k (uniform in [0, 2^64)) selects atom i iff
        t_{i-1} <= k < t_i, i.e. k/2^64 < cumulative weight, exactly."""
        out, cum = [], Fraction(0)
        for _, w in self.atoms:
            cum += w
            c = cum * 2**SAMPLING_BITS
            out.append(-((-c.numerator) // c.denominator))  # ceil
        return out


def relevant_places(mu: StepMeasure) -> list[Place]:
    """Infinity plus every prime dividing some nonzero entry of some atom."""
    primes: set[int] = set()
    for m in mu.matrices:
        for row in m.rows:
            primes |= primes_of(row)
    return [Place(p) for p in sorted(primes)] + [INF]


# --- trajectories -----------------------------------------------------------

class Trajectory:
    """x_n = g_1 ... g_n for i.i.d. g_k ~ mu, a deterministic function of the seed.

    Steps are drawn lazily; prefix products are cached only at requested n.
    ``shift`` drops the first steps (the walk g_{s+1} g_{s+2} ...).
    """

    def __init__(self, mu: StepMeasure, seed: int, shift: int = 0) -> None:
        self.mu = mu
        self.seed = seed
        self.shift = shift
        self._rng = random.Random(seed)
        self._cuts = mu.thresholds
        self._indices: list[int] = []
        self._cache: dict[int, TriMatrix] = {0: TriMatrix.identity(mu.dim)}

    def _draw(self, count: int) -> None:
        need = count + self.shift - len(self._indices)
        cuts, rng = self._cuts, self._rng
        for _ in range(max(0, need)):
            k = rng.getrandbits(SAMPLING_BITS)
            self._indices.append(bisect.bisect_right(cuts, k))

    def indices(self, n: int) -> list[int]:
        """Atom indices of g_1..g_n."""
        self._draw(n)
        return self._indices[self.shift : self.shift + n]

    def step(self, k: int) -> TriMatrix:
        """g_k (1-based)."""
        self._draw(k)
        return self.mu.atoms[self._indices[self.shift + k - 1]][0]

    def steps(self, n: int) -> list[TriMatrix]:
        mats = self.mu.matrices
        return [mats[i] for i in self.indices(n)]

    def position(self, n: int) -> TriMatrix:
        if n in self._cache:
            return self._cache[n]
        start = max(k for k in self._cache if k <= n)
        x = self._cache[start]
        mats = self.mu.matrices
        for i in self.indices(n)[start:n]:
            x = multiply(x, mats[i])
        self._cache[n] = x
        return x

    def positions(self, n: int) -> Iterator[tuple[int, TriMatrix]]:
        """Yield (k, x_k) for k = 1..n without caching the intermediate products."""
        x = self._cache[0]
        mats = self.mu.matrices
        for k, i in enumerate(self.indices(n), start=1):
            x = multiply(x, mats[i])
            yield k, x

    def diagonal(self, n: int) -> tuple[Fraction, ...]:
        """Diagonal of x_n as the product of step diagonals (no full product)."""
        diags = [m.diagonal() for m in self.mu.matrices]
        out = [Fraction(1)] * self.mu.dim
        for i in self.indices(n):
            out = [a * b for a, b in zip(out, diags[i])]
        return tuple(out)

    def diagonal_valuations(self, n: int, p: int) -> list[int]:
        """v_p of the diagonal of x_n, summed from step valuations."""
        vals = [[valuation(x, p) for x in m.diagonal()] for m in self.mu.matrices]
        out = [0] * self.mu.dim
        for i in self.indices(n):
            out = [a + b for a, b in zip(out, vals[i])]
        return out

    def shifted(self, s: int) -> Trajectory:
        return Trajectory(self.mu, self.seed, self.shift + s)


def sample_trajectory(mu: StepMeasure, seed: int, n: int) -> Trajectory:
    if n < 0:
        raise ValueError("n must be non-negative")
    t = Trajectory(mu, seed)
    t.position(n)
    return t


# --- drifts -----------------------------------------------------------------

@dataclass(frozen=True)
class DriftProfile:
    """phi_p(i) = r_{p,i} ln p at primes; phi_inf(i) kept as an exact log combination.

    Since ln|q|_inf = sum_p v_p(q) ln p, the archimedean drift is the linear
    combination of prime logs with coefficients sum_a mu(a) v_p(a_ii), which
    makes every drift comparison exactly decidable.
    """

    dim: int
    prime_drifts: Mapping[int, tuple[Fraction, ...]]
    arch_drift: tuple[LogCombination, ...]
    places: tuple[Place, ...] = field(default=())

    def phi(self, place: Place) -> tuple[LogCombination, ...]:
        if place.is_infinite:
            return self.arch_drift
        # primes outside the support have identically zero drift
        rs = self.prime_drifts.get(place.prime, (Fraction(0),) * self.dim)
        return tuple(LogCombination.single(place.prime, r) for r in rs)

    def phi_float(self, place: Place) -> list[float]:
        return [float(x) for x in self.phi(place)]

    def to_json(self) -> dict[str, Any]:
        return {
            "dimension": self.dim,
            "prime_drifts": {
                str(p): [format_rational(r) for r in rs] for p, rs in sorted(self.prime_drifts.items())
            },
            "prime_drifts_float": {
                str(p): [float(r) * math.log(p) for r in rs] for p, rs in sorted(self.prime_drifts.items())
            },
            "arch_drift": [
                {str(p): format_rational(c) for p, c in lc.coeffs.items()} for lc in self.arch_drift
            ],
            "arch_drift_float": [float(lc) for lc in self.arch_drift],
        }


def drift_profile(mu: StepMeasure) -> DriftProfile:
    places = relevant_places(mu)
    primes = [pl.prime for pl in places if not pl.is_infinite]
    d = mu.dim
    prime_drifts: dict[int, tuple[Fraction, ...]] = {}
    for p in primes:
        prime_drifts[p] = tuple(
            -sum((w * valuation(m.entry(i, i), p) for m, w in mu.atoms), Fraction(0))
            for i in range(1, d + 1)
        )
    arch = []
    for i in range(1, d + 1):
        lc = LogCombination()
        for m, w in mu.atoms:
            lc = lc + LogCombination.of_rational(m.entry(i, i)).scale(w)
        arch.append(lc)
    return DriftProfile(d, prime_drifts, tuple(arch), tuple(places))


def compare_drifts(profile: DriftProfile, place: Place, i: int, j: int) -> int:
    """Exact sign of phi(i) - phi(j) at ``place`` (1-based indices)."""
    phi = profile.phi(place)
    return (phi[i - 1] - phi[j - 1]).sign()


# --- moments ----------------------------------------------------------------

@dataclass(frozen=True)
class MomentReport:
    total: float
    per_place: Mapping[Place, float]
    # at primes, K_p = coefficient * ln p with an exact rational coefficient
    prime_coefficients: Mapping[int, Fraction]

    def K(self, place: Place) -> float:
        return self.per_place.get(place, 0.0)


def moment_value(mu: StepMeasure) -> MomentReport:
    """Integrand of the log-moment condition, split by place.

    K_p = sum_{r <= s} E|ln|a_rs|_p|; zero entries contribute nothing.
    """
    coeffs: dict[int, Fraction] = {}
    arch = 0.0
    for m, w in mu.atoms:
        for i in range(m.dim):
            for j in range(i, m.dim):
                x = m.rows[i][j]
                if x == 0:
                    continue
                for p, e in factor_rational(x).items():
                    coeffs[p] = coeffs.get(p, Fraction(0)) + w * abs(e)
                arch += float(w) * abs(log_abs(x))
    per_place: dict[Place, float] = {Place(p): float(c) * math.log(p) for p, c in sorted(coeffs.items())}
    per_place[INF] = arch
    return MomentReport(sum(per_place.values()), per_place, dict(sorted(coeffs.items())))
