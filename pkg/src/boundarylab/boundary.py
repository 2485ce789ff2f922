"""Boundary points: projective iteration on wedge subspaces and column assembly.

For a place p and a minor size j, the walk acts on the span of the wedge
tuples below J_j = {i <= j : phi(i) >= phi(j)} through the normalized
matrices a' = a^(r) / prod_{i in J} a_ii.  The last column of x'_n converges;
its coordinates give the column j of the boundary point Z^p directly:
Z_{l,j} = eps_l * (coordinate of e_{I_l}), I_l = {l} u J_j minus {j}.

Convergence is certified heuristically (a stopping rule, not a proof); every
approximant carries the flag and the error estimate it was certified with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from .bruhat import CellDescriptor, cell_of
from .rational import LogCombination, Place, format_rational, log_abs, valuation
from .triangular import (
    SubspaceBasis,
    TriMatrix,
    appendix_rows,
    det_bareiss,
    matmul,
    minor,
    submatrix,
    wedge_rep,
)
from .walk import DriftProfile, Trajectory

CERT_BLOCKS = 10
ARCH_SAFETY = 2.0
DEFAULT_MAX_BITS = 2_000_000


class ConsistencyError(RuntimeError):
    """A mathematically guaranteed sign or shape condition failed (indicates a bug)."""


class BitSizeExceeded(RuntimeError):
    pass


# --- index bookkeeping ------------------------------------------------------

def j_set(phi: Sequence[LogCombination], j: int) -> tuple[int, ...]:
    """J_j = {i <= j : phi(i) >= phi(j)} (1-based, contains j)."""
    return tuple(i for i in range(1, j + 1) if phi[i - 1].compare(phi[j - 1]) >= 0)


def column_basis(profile: DriftProfile, place: Place, j: int) -> SubspaceBasis:
    return SubspaceBasis(j, j_set(profile.phi(place), j))


def epsilon_sign(J: Sequence[int], l: int, j: int) -> int:
    """(-1)^#{i in J : l < i < j}."""
    return -1 if sum(1 for i in J if l < i < j) % 2 else 1


def reduced_drifts(profile: DriftProfile, basis: SubspaceBasis, place: Place) -> list[LogCombination]:
    """phi'(k) = sum_{K_k} phi - sum_J phi for k < m; each must be negative."""
    phi = profile.phi(place)
    base = LogCombination()
    for j in basis.J:
        base = base + phi[j - 1]
    out = []
    for tup in basis.elements[:-1]:
        v = LogCombination()
        for i in tup:
            v = v + phi[i - 1]
        v = v - base
        if v.sign() >= 0:
            raise ConsistencyError(f"reduced drift for {tup} is not negative at {place}")
        out.append(v)
    return out


def predicted_rate(profile: DriftProfile, basis: SubspaceBasis, place: Place) -> LogCombination | None:
    """max_k phi'(k): the contraction exponent of the successive differences."""
    rd = reduced_drifts(profile, basis, place)
    if not rd:
        return None
    best = rd[0]
    for v in rd[1:]:
        if v.compare(best) > 0:
            best = v
    return best


# --- results ----------------------------------------------------------------

@dataclass
class PadicApproximant:
    """value approximates a limit; at a prime v_p(limit - value) >= error_exponent,
    at infinity |limit - value| <= error_bound (both heuristic, see module doc)."""

    place: Place
    value: Fraction
    error_exponent: float | None = None  # int, or inf when no difference was seen
    error_bound: Fraction | None = None
    certified: bool = False

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"value": format_rational(self.value), "certified": self.certified}
        if self.place.is_infinite:
            out["value_float"] = float(self.value)
            b = self.error_bound
            out["error_bound"] = None if b is None else float(b)
            out["log10_error_bound"] = None if not b else (log_abs(b) / math.log(10))
        else:
            # p-adic approximants are large rationals; a float would be meaningless
            out["value_bits"] = self.value.numerator.bit_length() + self.value.denominator.bit_length()
            e = self.error_exponent
            out["error_exponent"] = None if e is None else (int(e) if math.isfinite(e) else "inf")
        return out


@dataclass
class ConvergenceReport:
    place: Place
    steps_used: int
    certified: bool
    observed_slope: float | None
    predicted_slope: float | None
    # (n, v_p(Delta_n)) at a prime, (n, ln|Delta_n|) at infinity; zero differences omitted
    history: list[tuple[int, float]] = field(default_factory=list)
    reason: str = ""

    @property
    def rate_ratio(self) -> float | None:
        if self.observed_slope is None or not self.predicted_slope:
            return None
        return self.observed_slope / self.predicted_slope

    def to_json(self) -> dict[str, Any]:
        return {
            "place": str(self.place),
            "steps_used": self.steps_used,
            "certified": self.certified,
            "observed_slope": self.observed_slope,
            "predicted_slope": self.predicted_slope,
            "rate_ratio": self.rate_ratio,
            "reason": self.reason,
        }

    def csv_rows(self) -> list[list[Any]]:
        head = "valuation" if not self.place.is_infinite else "log_abs"
        return [["n", head]] + [[n, v] for n, v in self.history]


@dataclass
class ProjectiveResult:
    basis: SubspaceBasis
    approximants: list[PadicApproximant]
    report: ConvergenceReport

    @property
    def values(self) -> list[Fraction]:
        return [a.value for a in self.approximants]


# --- iteration --------------------------------------------------------------

def _normalized_wedges(traj: Trajectory, basis: SubspaceBasis) -> list[tuple[tuple[Fraction, ...], ...]]:
    return [wedge_rep(minor(g, basis.dimension), basis).normalized() for g in traj.mu.matrices]


def _max_bits(rows: Sequence[Sequence[Fraction]]) -> int:
    return max(
        (max(x.numerator.bit_length(), x.denominator.bit_length()) for row in rows for x in row),
        default=0,
    )


def _slope(points: Sequence[tuple[int, float]]) -> float | None:
    if len(points) < CERT_BLOCKS:
        return None
    xs = np.array([p[0] for p in points], dtype=float)
    ys = np.array([p[1] for p in points], dtype=float)
    return float(np.polyfit(xs, ys, 1)[0])


def iterate_projective(
    traj: Trajectory,
    basis: SubspaceBasis,
    place: Place,
    max_steps: int,
    u0: Sequence[Fraction] | None = None,
    rate: LogCombination | None = None,
    max_bits: int = DEFAULT_MAX_BITS,
) -> ProjectiveResult:
    """Iterate x_n . u0 = x'_n u0 exactly and certify Cauchy convergence at ``place``.

    ``rate`` is the predicted (negative) contraction exponent; at a prime it
    sets the minimal average valuation gain the stopping rule demands.
    """
    m = basis.m
    u = [Fraction(0)] * (m - 1) + [Fraction(1)] if u0 is None else [Fraction(x) for x in u0]
    if len(u) != m or u[-1] != 1:
        raise ValueError("u0 must have length m and last coordinate 1")
    if m == 1:
        rep = ConvergenceReport(place, 0, True, None, None, reason="m = 1: nothing to iterate")
        return ProjectiveResult(basis, [PadicApproximant(place, Fraction(1), math.inf, Fraction(0), True)], rep)

    gs = _normalized_wedges(traj, basis)
    X: tuple[tuple[Fraction, ...], ...] = tuple(
        tuple(Fraction(int(i == j)) for j in range(m)) for i in range(m)
    )
    prev = list(u)
    diffs: list[float] = []  # valuation (prime) or log-abs (inf); nan marks a zero difference
    last_abs: list[Fraction] = []
    p = place.prime
    for n, idx in enumerate(traj.indices(max_steps), start=1):
        X = matmul(X, gs[idx])
        cur = [sum((X[k][l] * u[l] for l in range(k, m) if u[l]), Fraction(0)) for k in range(m)]
        delta = [a - b for a, b in zip(cur, prev)]
        nz = [x for x in delta if x]
        if not nz:
            diffs.append(math.nan)
        elif p is None:
            big = max(abs(x) for x in nz)
            diffs.append(log_abs(big))
        else:
            diffs.append(float(min(valuation(x, p) for x in nz)))
        if p is None:
            last_abs.append(max((abs(x) for x in nz), default=Fraction(0)))
            if len(last_abs) > CERT_BLOCKS:
                last_abs.pop(0)
        prev = cur
        if n % 64 == 0 and _max_bits(X) > max_bits:
            raise BitSizeExceeded(f"entry size exceeded {max_bits} bits at step {n}")

    certified, reason, slope, err = _certify(diffs, place, rate, last_abs)
    history = [(n, v) for n, v in enumerate(diffs, start=1) if not math.isnan(v)]
    pred = float(rate) if rate is not None else None
    rep = ConvergenceReport(place, max_steps, certified, slope, pred, history, reason)
    approx = []
    for x in prev:
        if p is None:
            approx.append(PadicApproximant(place, x, error_bound=err, certified=certified))
        else:
            approx.append(PadicApproximant(place, x, error_exponent=err, certified=certified))
    return ProjectiveResult(basis, approx, rep)


def _max_excursion(points: Sequence[tuple[int, float]], slope: float) -> float:
    """Largest rise of y_k - slope * k above an earlier value, i.e. how far the
    sequence has been seen to climb against its own trend (0 if never)."""
    best, low = 0.0, math.inf
    for k, y in points:
        r = y - slope * k
        if r - low > best:
            best = r - low
        low = min(low, r)
    return best


def _certify(
    diffs: list[float], place: Place, rate: LogCombination | None, last_abs: list[Fraction]
) -> tuple[bool, str, float | None, Any]:
    """Block stopping rule.

    The tail of the difference sequence is cut into 10 blocks of equal length
    B = max(1, n // 20).  At a prime the block minima of v_p(Delta) must
    increase strictly with average gain per step >= rate / (2 ln p); the
    error exponent is the minimal valuation among the last 10 differences.
    At infinity the block maxima of ln|Delta| must decrease strictly (average
    drop per step >= |rate| / 2); the error bound is the geometric tail
    2 * M * e^E * rho / (1 - rho), M the largest of the last 10 differences and
    rho = exp(fitted slope).  B = 1 recovers the plain "last 10 differences"
    rule; longer blocks absorb the fluctuations of a random walk.

    For a random walk, ln|Delta_n| (or -v_p(Delta_n)) fluctuates around its
    trend and may climb above its current level before decaying.  E is the
    largest such trend-adjusted climb seen in the tail; it widens the bound at
    infinity and is subtracted (rounded up) from the exponent at a prime.
    """
    n = len(diffs)
    finite_pts = [(k, v) for k, v in enumerate(diffs, start=1) if not math.isnan(v)]
    if place.is_infinite:
        slope = _slope(finite_pts)
    else:
        slope = _slope([(k, -v * math.log(place.prime)) for k, v in finite_pts])
    if n < CERT_BLOCKS:
        return False, f"only {n} steps", slope, None
    B = max(1, n // (2 * CERT_BLOCKS))
    tail = diffs[n - CERT_BLOCKS * B :]
    blocks = [tail[i * B : (i + 1) * B] for i in range(CERT_BLOCKS)]
    need = abs(float(rate)) / 2 if rate is not None else 0.0

    if not place.is_infinite:
        lnp = math.log(place.prime)
        mins = [min((v for v in b if not math.isnan(v)), default=math.inf) for b in blocks]
        finite = [(i, v) for i, v in enumerate(mins) if math.isfinite(v)]
        last10 = [v for v in diffs[-CERT_BLOCKS:] if not math.isnan(v)]
        err = min(last10) if last10 else math.inf
        tail_pts = [(k, -v) for k, v in finite_pts if k > n - CERT_BLOCKS * B]
        if not finite:
            return True, "no nonzero difference in the tail (stationary)", slope, err
        if any(math.isinf(v) for v in mins[: finite[-1][0]]):
            return False, "zero block before a nonzero one", slope, err
        vals = [v for _, v in finite]
        if any(b <= a for a, b in zip(vals, vals[1:])):
            return False, "block minima of the valuations are not strictly increasing", slope, err
        if len(finite) >= 2:
            gain = (vals[-1] - vals[0]) / ((finite[-1][0] - finite[0][0]) * B)
            if gain * lnp < need:
                return False, f"average valuation gain {gain:.4g} below half the predicted rate", slope, err
        if slope is not None and math.isfinite(err):
            err -= math.ceil(_max_excursion(tail_pts, slope / lnp))
        return True, "certified", slope, err

    maxs = [max((v for v in b if not math.isnan(v)), default=-math.inf) for b in blocks]
    finite = [(i, v) for i, v in enumerate(maxs) if math.isfinite(v)]
    if not finite:
        return True, "no nonzero difference in the tail (stationary)", slope, Fraction(0)
    if any(math.isinf(v) for v in maxs[: finite[-1][0]]):
        return False, "zero block before a nonzero one", slope, None
    vals = [v for _, v in finite]
    if any(b >= a for a, b in zip(vals, vals[1:])):
        return False, "block maxima of |Delta| are not strictly decreasing", slope, None
    if len(finite) >= 2:
        drop = (vals[0] - vals[-1]) / ((finite[-1][0] - finite[0][0]) * B)
        if drop < need:
            return False, f"average decay {drop:.4g} below half the predicted rate", slope, None
    if slope is None or slope >= 0:
        return False, "fitted slope is not negative", slope, None
    rho = math.exp(slope)
    M = max(last_abs) if last_abs else Fraction(0)
    excursion = _max_excursion([(k, v) for k, v in finite_pts if k > n - CERT_BLOCKS * B], slope)
    return True, "certified", slope, M * Fraction(ARCH_SAFETY * math.exp(excursion) * rho / (1 - rho))


# --- assembly ---------------------------------------------------------------

@dataclass
class BoundaryPoint:
    place: Place
    cell: CellDescriptor
    entries: dict[tuple[int, int], PadicApproximant]
    columns: dict[int, ProjectiveResult] = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return all(a.certified for a in self.entries.values())

    def matrix(self) -> TriMatrix:
        d = self.cell.dim
        rows = [[Fraction(int(i == j)) for j in range(1, d + 1)] for i in range(1, d + 1)]
        for (i, j), a in self.entries.items():
            rows[i - 1][j - 1] = a.value
        return TriMatrix(rows)

    def to_json(self) -> dict[str, Any]:
        return {
            "place": str(self.place),
            "cell": self.cell.to_json(),
            "certified": self.certified,
            "entries": {f"{i},{j}": a.to_json() for (i, j), a in sorted(self.entries.items())},
            "columns": {str(j): r.report.to_json() for j, r in sorted(self.columns.items())},
        }


def assemble_boundary_point(
    traj: Trajectory,
    profile: DriftProfile,
    place: Place,
    max_steps: int,
    max_bits: int = DEFAULT_MAX_BITS,
) -> BoundaryPoint:
    """Z^p from the minor walks of sizes 2..d; non-free entries are exactly 0."""
    cell = cell_of(profile, place)
    entries: dict[tuple[int, int], PadicApproximant] = {}
    columns: dict[int, ProjectiveResult] = {}
    free = cell.free
    for j in range(2, profile.dim + 1):
        rows = sorted(l for (l, jj) in free if jj == j)
        if not rows:
            continue
        basis = column_basis(profile, place, j)
        rate = predicted_rate(profile, basis, place)
        res = iterate_projective(traj, basis, place, max_steps, rate=rate, max_bits=max_bits)
        columns[j] = res
        for l in rows:
            k = basis.index[appendix_rows(basis.J, l, j)]
            src = res.approximants[k - 1]
            entries[(l, j)] = PadicApproximant(
                place,
                epsilon_sign(basis.J, l, j) * src.value,
                src.error_exponent,
                src.error_bound,
                src.certified,
            )
    return BoundaryPoint(place, cell, entries, columns)


def wedge_discrepancy(point: BoundaryPoint) -> dict[int, float | int]:
    """Compare the wedge of the assembled columns with each iterated limit vector.

    Returns, per column j, the max |difference| at infinity or the min
    valuation of the difference at a prime (inf when they agree exactly).
    """
    Z = point.matrix()
    out: dict[int, float | int] = {}
    for j, res in point.columns.items():
        basis = res.basis
        diffs = []
        for k, tup in enumerate(basis.elements):
            wedge = det_bareiss(submatrix(Z, tup, basis.J))
            diffs.append(wedge - res.approximants[k].value)
        nz = [x for x in diffs if x]
        if point.place.is_infinite:
            out[j] = float(max((abs(x) for x in nz), default=Fraction(0)))
        else:
            out[j] = min((valuation(x, point.place.prime) for x in nz), default=math.inf)
    return out


def snl_series(
    traj: Trajectory,
    profile: DriftProfile,
    place: Place,
    l: int,
    max_steps: int,
    column: int | None = None,
) -> list[Fraction]:
    """S_n^l = eps_l / prod_{J} (x_n)_jj * det((x_n)_{I x J}) for n = 1..max_steps.

    Evaluated from the full products x_n, independently of the wedge iteration.
    """
    j = profile.dim if column is None else column
    J = j_set(profile.phi(place), j)
    if l in J:
        raise ValueError(f"l={l} belongs to J={J}")
    if not 1 <= l < j:
        raise ValueError(f"l={l} outside 1..{j - 1}")
    rows = appendix_rows(J, l, j)
    eps = epsilon_sign(J, l, j)
    out = []
    for _, x in traj.positions(max_steps):
        xm = minor(x, j)
        den = Fraction(1)
        for i in J:
            den *= xm.entry(i, i)
        out.append(eps * det_bareiss(submatrix(xm, rows, J)) / den)
    return out


def valid_snl_indices(profile: DriftProfile, place: Place, column: int | None = None) -> list[int]:
    j = profile.dim if column is None else column
    J = j_set(profile.phi(place), j)
    return [l for l in range(1, j) if l not in J]
