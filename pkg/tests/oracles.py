"""Independent reference implementations used only by the tests.

Each one takes a deliberately different route from the library code:
permutation brute force instead of sorting, Leibniz expansion instead of
Bareiss, naive scans instead of counting recursions.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Sequence

import mpmath


def perm_sign(p: Sequence[int]) -> int:
    s = 1
    p = list(p)
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                s = -s
    return s


def det_leibniz(m: Sequence[Sequence[Fraction]]) -> Fraction:
    n = len(m)
    total = Fraction(0)
    for p in itertools.permutations(range(n)):
        prod = Fraction(perm_sign(p))
        for i in range(n):
            prod *= m[i][p[i]]
            if not prod:
                break
        total += prod
    return total


def wedge_matrix_leibniz(rows: Sequence[Sequence[Fraction]], tuples: Sequence[tuple[int, ...]]):
    """Coefficient of e_K in a e_{L_1} ^ ... ^ a e_{L_r}, by expanding each column."""
    out = []
    for K in tuples:
        out.append([det_leibniz([[rows[i - 1][j - 1] for j in L] for i in K]) for L in tuples])
    return out


def brute_force_weyl(phi: Sequence[Fraction | float]) -> list[tuple[int, ...]]:
    """All w satisfying: i<j, phi(i) >= phi(j) => w(i) > w(j), and phi(i) < phi(j) => w(i) < w(j)."""
    d = len(phi)
    found = []
    for w in itertools.permutations(range(1, d + 1)):
        ok = True
        for i in range(d):
            for j in range(i + 1, d):
                if phi[i] >= phi[j] and not w[i] > w[j]:
                    ok = False
                if phi[i] < phi[j] and not w[i] < w[j]:
                    ok = False
        if ok:
            found.append(w)
    return found


def log_value(coeffs: dict[int, Fraction], dps: int = 60) -> mpmath.mpf:
    with mpmath.workdps(dps):
        return mpmath.fsum(mpmath.mpf(c.numerator) / c.denominator * mpmath.log(p) for p, c in coeffs.items())


def v_p(q: Fraction, p: int) -> int:
    """Valuation by repeated division (no bit tricks)."""
    n, d, v = abs(q.numerator), q.denominator, 0
    while n % p == 0:
        n //= p
        v += 1
    while d % p == 0:
        d //= p
        v -= 1
    return v


def trial_primes(n: int) -> list[int]:
    out, k = [], 2
    n = abs(n)
    while k * k <= n:
        if n % k == 0:
            out.append(k)
            while n % k == 0:
                n //= k
        k += 1
    if n > 1:
        out.append(n)
    return out


def height_by_places(q: Fraction) -> float:
    """sum over primes of |ln|q|_p| (the finite-place definition)."""
    ps = set(trial_primes(q.numerator)) | set(trial_primes(q.denominator))
    return sum(abs(v_p(q, p)) * math.log(p) for p in ps)


def height_plus_by_places(q: Fraction) -> float:
    """sum over all places of ln^+ |q|_v for q embedded diagonally."""
    if q == 0:
        return 0.0
    ps = set(trial_primes(q.numerator)) | set(trial_primes(q.denominator))
    s = sum(max(0, -v_p(q, p)) * math.log(p) for p in ps)
    return s + max(0.0, math.log(abs(q.numerator)) - math.log(q.denominator))


def length_by_places(rows: Sequence[Sequence[Fraction]]) -> float:
    d = len(rows)
    s = sum(height_by_places(rows[i][i]) for i in range(d))
    for i in range(d):
        for j in range(i + 1, d):
            s += height_plus_by_places(rows[i][j] / rows[j][j])
    return s


def inverse_2x2(a: Fraction, b: Fraction, c: Fraction):
    return [[1 / a, -b / (a * c)], [Fraction(0), 1 / c]]


def brute_gauge_2x2(k: float, num_bound: int, den_bound: int) -> set[tuple[Fraction, Fraction, Fraction]]:
    """All 2x2 (a11, a12, a22) with entries in the box and ||a^{-1}|| <= k."""
    vals = {Fraction(s * r, t) for r in range(0, num_bound + 1) for t in range(1, den_bound + 1) for s in (1, -1)}
    nonzero = sorted(v for v in vals if v)
    out = set()
    eps = 1e-9
    small = [q for q in nonzero if height_by_places(q) <= k + eps]
    for a in small:
        for c in small:
            if height_by_places(a) + height_by_places(c) > k + eps:
                continue
            for b in vals:
                if length_by_places(inverse_2x2(a, b, c)) <= k + eps:
                    out.add((a, b, c))
    return out
