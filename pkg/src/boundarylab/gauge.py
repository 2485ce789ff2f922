"""Heights, adelic lengths, gauges and the walk statistics built on them.

Every length here is the logarithm of a positive rational: <q> = ln(r s),
<b>^+ sums ln max(1, |b|_v) over places, and the adelic length adds those.
Functions ending in ``_exp`` return that rational exactly; the float forms
are its logarithm.  Gauge balls {||.|| <= k} therefore reduce to integer
comparisons against floor(e^k).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Iterable, Mapping, Sequence

import mpmath

from .rational import INF, Place, RationalLike, as_rational, factor_integer, factor_rational, log_abs, valuation
from .triangular import TriMatrix, inverse, multiply, split_ud
from .walk import DriftProfile, StepMeasure, Trajectory, drift_profile, relevant_places

GAUGE_BUDGET = 10**7
MATERIALIZE_LIMIT = 2 * 10**5


class GaugeBudgetExceeded(RuntimeError):
    def __init__(self, k: float, estimate: int, budget: int) -> None:
        super().__init__(f"gauge at k={k} has {estimate} elements, over the budget {budget}")
        self.estimate = estimate
        self.budget = budget


# --- heights ----------------------------------------------------------------

def height_exp(q: RationalLike) -> int:
    """e^<q> = r * s for q = +-r/s in lowest terms."""
    q = as_rational(q)
    if q == 0:
        raise ValueError("height of zero undefined")
    return abs(q.numerator) * q.denominator


def height(q: RationalLike) -> float:
    return math.log(height_exp(q))


def height_from_valuations(q: RationalLike) -> float:
    """sum_p |v_p(q)| ln p (same value as :func:`height`, via factorization)."""
    return sum(abs(e) * math.log(p) for p, e in factor_rational(as_rational(q)).items())


def norm_plus_exp(x: Fraction, place: Place) -> Fraction:
    """e^{ln^+ |x|_v} = max(1, |x|_v); zero gives 1."""
    if x == 0:
        return Fraction(1)
    if place.is_infinite:
        return max(Fraction(1), abs(x))
    v = valuation(x, place)
    return Fraction(place.prime ** max(0, -v))


def height_plus_exp(q: RationalLike) -> int:
    """e^<q>^+ for q embedded diagonally in the adeles: max(|r|, s)."""
    q = as_rational(q)
    if q == 0:
        return 1
    return max(abs(q.numerator), q.denominator)


@dataclass(frozen=True)
class AdelePoint:
    """Finitely many explicit components; every other place carries ``default``."""

    default: Fraction = Fraction(0)
    components: Mapping[Place, Fraction] = field(default_factory=dict)

    def at(self, place: Place) -> Fraction:
        return self.components.get(place, self.default)

    def height_plus_exp(self) -> Fraction:
        out = Fraction(height_plus_exp(self.default))
        for pl, x in self.components.items():
            out = out / norm_plus_exp(self.default, pl) * norm_plus_exp(x, pl)
        return out

    def height_plus_at(self, place: Place) -> float:
        return log_abs(norm_plus_exp(self.at(place), place))


def height_plus(b: AdelePoint | RationalLike) -> float:
    if isinstance(b, AdelePoint):
        return log_abs(b.height_plus_exp())
    return math.log(height_plus_exp(b))


# --- the group H = U(A) Delta(Q) ---------------------------------------------

@dataclass(frozen=True)
class HPoint:
    """Element of H as one rational triangular matrix per place.

    ``default`` is the component at every place not listed in ``at``; all
    components share the same (rational) diagonal.
    """

    default: TriMatrix
    at: Mapping[Place, TriMatrix] = field(default_factory=dict)

    def __post_init__(self) -> None:
        diag = self.default.diagonal()
        for pl, m in self.at.items():
            if m.diagonal() != diag:
                raise ValueError(f"component at {pl} has a different diagonal")

    @classmethod
    def from_rational(cls, a: TriMatrix) -> HPoint:
        return cls(a, {})

    @property
    def dim(self) -> int:
        return self.default.dim

    @property
    def diagonal(self) -> tuple[Fraction, ...]:
        return self.default.diagonal()

    def component(self, place: Place) -> TriMatrix:
        return self.at.get(place, self.default)

    def unipotent_entry(self, i: int, j: int) -> AdelePoint:
        d = split_ud(self.default).unipotent.entry(i, j)
        comps = {pl: split_ud(m).unipotent.entry(i, j) for pl, m in self.at.items()}
        return AdelePoint(d, comps)

    def __matmul__(self, other: HPoint) -> HPoint:
        places = set(self.at) | set(other.at)
        return HPoint(
            multiply(self.default, other.default),
            {pl: multiply(self.component(pl), other.component(pl)) for pl in places},
        )


def adelic_length_exp(h: HPoint | TriMatrix) -> Fraction:
    """e^||h|| = prod_{i<j} e^<u_ij>^+ * prod_i e^<delta_i>."""
    if isinstance(h, TriMatrix):
        h = HPoint.from_rational(h)
    out = Fraction(1)
    for x in h.diagonal:
        out *= height_exp(x)
    d = h.dim
    for i in range(1, d + 1):
        for j in range(i + 1, d + 1):
            out *= h.unipotent_entry(i, j).height_plus_exp()
    return out


def adelic_length(h: HPoint | TriMatrix) -> float:
    return log_abs(adelic_length_exp(h))


def rational_length_exp(a: TriMatrix) -> int:
    """e^||a|| for a in A(Q): an integer."""
    u = split_ud(a).unipotent
    out = 1
    for x in a.diagonal():
        out *= height_exp(x)
    for i in range(a.dim):
        for j in range(i + 1, a.dim):
            out *= height_plus_exp(u.rows[i][j])
    return out


def ceil_log(N: RationalLike) -> int:
    """Smallest integer n >= 0 with e^n >= N."""
    N = as_rational(N)
    if N <= 1:
        return 0
    n = max(0, math.ceil(log_abs(N)) - 1)
    with mpmath.workdps(60):
        while mpmath.exp(n) < mpmath.mpf(N.numerator) / N.denominator:
            n += 1
    return n


def exp_floor(k: float, snap: float = 1e-9) -> int:
    """floor(e^k), snapping to the nearest integer when e^k is within ``snap``
    (relative) of it, so that k = ln 6 means "<= 6" despite float rounding."""
    with mpmath.workdps(40):
        v = mpmath.exp(mpmath.mpf(k))
        r = int(mpmath.nint(v))
        if r > 0 and abs(v - r) <= snap * r:
            return r
        return int(mpmath.floor(v))


# --- near sub-additivity ------------------------------------------------------

@dataclass
class SubadditivityReport:
    scalar_checks: int
    violations: list[str]
    K_hat: float
    K_prime_hat: float

    @property
    def passed(self) -> bool:
        return not self.violations


def near_subadditivity_check(samples: Sequence[tuple[TriMatrix, TriMatrix]]) -> SubadditivityReport:
    """Exact scalar inequalities on sample entries, then the smallest linear
    envelope ||h h'|| <= K + K' (||h|| + ||h'||) over the sample.

    The envelope minimizes K + K' * mean(||h|| + ||h'||) subject to every
    sample constraint, K, K' >= 0 (a two-variable linear program).
    """
    from scipy.optimize import linprog

    violations = []
    checks = 0
    lhs, sums = [], []
    for idx, (h, h2) in enumerate(samples):
        for q, q2 in zip(h.diagonal(), h2.diagonal()):
            checks += 1
            if height_exp(q * q2) > height_exp(q) * height_exp(q2):
                violations.append(f"sample {idx}: <qq'> > <q> + <q'> for q={q}, q'={q2}")
        u, u2 = split_ud(h).unipotent, split_ud(h2).unipotent
        d = h.dim
        for i in range(d):
            for j in range(i + 1, d):
                for k in range(i + 1, j + 1):
                    b, b1, b2 = u.rows[i][j], u.rows[i][k], u2.rows[k][j]
                    q = h2.rows[k][k] if k < d else Fraction(1)
                    checks += 1
                    left = height_plus_exp(b + q * b1 * b2)
                    right = 2 * height_plus_exp(b) * height_plus_exp(b1) * height_plus_exp(b2) * height_exp(q)
                    if left > right:
                        violations.append(f"sample {idx}: <b + q b' b''>^+ bound fails at ({i + 1},{j + 1},{k + 1})")
        lhs.append(adelic_length(multiply(h, h2)))
        sums.append(adelic_length(h) + adelic_length(h2))
    if not samples:
        return SubadditivityReport(checks, violations, 0.0, 0.0)
    mean = sum(sums) / len(sums)
    res = linprog(
        c=[1.0, mean],
        A_ub=[[-1.0, -s] for s in sums],
        b_ub=[-x for x in lhs],
        bounds=[(0, None), (0, None)],
        method="highs",
    )
    K, Kp = (float(res.x[0]), float(res.x[1])) if res.success else (math.nan, math.nan)
    return SubadditivityReport(checks, violations, K, Kp)


# --- gauges -----------------------------------------------------------------

def _divisor_split_count(c: int) -> int:
    """Number of coprime (r, s) with r * s = c."""
    return 2 ** len(factor_integer(c))


@lru_cache(maxsize=None)
def _totient(c: int) -> int:
    out = c
    for p in factor_integer(c):
        out -= out // p
    return out


def diag_count(c: int) -> int:
    """#{q != 0 : e^<q> = c}."""
    return 2 * _divisor_split_count(c)


def offdiag_count(c: int) -> int:
    """#{q : e^<q>^+ = c}, counting 0 at c = 1."""
    return 3 if c == 1 else 4 * _totient(c)


def count_height_ball(N: int) -> int:
    """#{q != 0 : <q> <= ln N}."""
    return sum(diag_count(c) for c in range(1, N + 1))


def rationals_of_height_at_most(N: int) -> list[Fraction]:
    out = []
    for c in range(1, N + 1):
        for r in _coprime_splits(c):
            out += [Fraction(r, c // r), Fraction(-r, c // r)]
    return out


def _coprime_splits(c: int) -> list[int]:
    """All r with r * (c // r) = c and gcd(r, c // r) = 1."""
    rs = [1]
    for p, e in factor_integer(c).items():
        rs += [r * p**e for r in rs]
    return sorted(rs)


def _offdiag_values(c: int) -> list[Fraction]:
    if c == 1:
        return [Fraction(0), Fraction(1), Fraction(-1)]
    out = []
    for t in range(1, c):
        if math.gcd(t, c) == 1:
            out += [Fraction(c, t), Fraction(-c, t), Fraction(t, c), Fraction(-t, c)]
    return out


def gauge_count(k: float, d: int, N: int | None = None) -> int:
    """Exact Card{a in A(Q) : ||a|| <= k} by counting factorized budgets.

    ||a|| <= k iff the integer e^||a|| <= floor(e^k); the count is a sum over
    per-coordinate costs, memoized on the remaining budget.
    """
    N = exp_floor(k) if N is None else N
    kinds = ["d"] * d + ["u"] * (d * (d - 1) // 2)

    @lru_cache(maxsize=None)
    def count(budget: int, pos: int) -> int:
        if pos == len(kinds):
            return 1
        f = diag_count if kinds[pos] == "d" else offdiag_count
        return sum(f(c) * count(budget // c, pos + 1) for c in range(1, budget + 1))

    return count(N, 0)


def enumerate_gauge(
    k: float,
    h: TriMatrix | None = None,
    d: int | None = None,
    budget: int = GAUGE_BUDGET,
    materialize_limit: int = MATERIALIZE_LIMIT,
) -> set[TriMatrix]:
    """The finite set G_k^h = {a in A(Q) : ||a^{-1} h|| <= k} for rational h.

    Enumerates b = u delta with ||b|| <= k (diagonal entries from the height
    ball, unipotent entries from the <.>^+ ball) and returns a = h b^{-1}.
    """
    if h is None:
        if d is None:
            raise ValueError("give h or d")
        h = TriMatrix.identity(d)
    d = h.dim
    N = exp_floor(k)
    est = gauge_count(k, d, N)
    if est > min(budget, materialize_limit):
        raise GaugeBudgetExceeded(k, est, min(budget, materialize_limit))

    out: set[TriMatrix] = set()
    upper = [(i, j) for i in range(d) for j in range(i + 1, d)]

    def rec_u(budget: int, idx: int, delta: tuple[Fraction, ...], u: dict) -> None:
        if idx == len(upper):
            rows = [[Fraction(0)] * d for _ in range(d)]
            for i in range(d):
                rows[i][i] = delta[i]
            for (i, j), x in u.items():
                rows[i][j] = x * delta[j]
            out.add(multiply(h, inverse(TriMatrix(rows))))
            return
        for c in range(1, budget + 1):
            for x in _offdiag_values(c):
                u[upper[idx]] = x
                rec_u(budget // c, idx + 1, delta, u)
        u.pop(upper[idx], None)

    def rec_d(budget: int, idx: int, delta: tuple[Fraction, ...]) -> None:
        if idx == d:
            rec_u(budget, 0, delta, {})
            return
        for c in range(1, budget + 1):
            for r in _coprime_splits(c):
                for q in (Fraction(r, c // r), Fraction(-r, c // r)):
                    rec_d(budget // c, idx + 1, delta + (q,))

    rec_d(N, 0, ())
    return out


@dataclass
class GaugeReport:
    k: float
    h: str
    d: int
    cardinality: int
    bound: float
    method: str

    @property
    def passed(self) -> bool:
        return self.cardinality <= self.bound

    def to_row(self) -> list[Any]:
        return [self.k, self.cardinality, self.bound, self.passed]

    def to_json(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "h": self.h,
            "d": self.d,
            "cardinality": self.cardinality,
            "bound": self.bound,
            "pass": self.passed,
            "method": self.method,
        }


def growth_bound(k: float, d: int) -> float:
    """(2 e^{6k})^{d^2}."""
    return float((2 * mpmath.exp(6 * k)) ** (d * d))


def gauge_report(k: float, d: int, materialize: bool = True, budget: int = GAUGE_BUDGET) -> GaugeReport:
    """Cardinality of G_k^{Id} against the uniform growth bound.

    With ``materialize`` the set is built element by element (and must agree
    with the counting recursion); otherwise only the exact count is used.
    """
    count = gauge_count(k, d)
    if count > budget:
        raise GaugeBudgetExceeded(k, count, budget)
    method = "count"
    if materialize and count <= MATERIALIZE_LIMIT:
        card = len(enumerate_gauge(k, d=d))
        if card != count:
            raise AssertionError(f"enumeration ({card}) and count ({count}) disagree at k={k}")
        method = "enumeration+count"
    return GaugeReport(k, "Id", d, count, growth_bound(k, d), method)


# --- q_n^i and the L^1 statistic -----------------------------------------------

def signed_integer_part(x: Fraction) -> int:
    """floor(x) for x >= 0, -floor(-x) otherwise (truncation toward zero)."""
    return int(x)


def qn_approximant(profile: DriftProfile, i: int, n: int) -> Fraction:
    """q_n^i = prod_p p^{-[n phi_p(i) / ln p]}, exact in the rational drifts."""
    out = Fraction(1)
    for p, rs in profile.prime_drifts.items():
        e = signed_integer_part(n * rs[i - 1])
        out *= Fraction(p) ** (-e)
    return out


@dataclass
class QniTable:
    n_list: list[int]
    means: list[float]
    per_seed: dict[int, list[float]]
    index: int

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.means, self.means[1:]))

    def csv_rows(self) -> list[list[Any]]:
        rows: list[list[Any]] = [["seed", "n", "statistic"]]
        for seed in sorted(self.per_seed):
            for n, v in zip(self.n_list, self.per_seed[seed]):
                rows.append([seed, n, v])
        return rows


def qni_value(traj: Trajectory, profile: DriftProfile, i: int, n: int) -> float:
    """<(x_n)^{-1}_ii q_n^i> / n, using the exact diagonal of x_n."""
    x_ii = traj.diagonal(n)[i - 1]
    return height(qn_approximant(profile, i, n) / x_ii) / n


def qni_statistic(mu: StepMeasure, seeds: Iterable[int], n_list: Sequence[int], i: int = 1) -> QniTable:
    profile = drift_profile(mu)
    ns = sorted(n_list)
    per_seed: dict[int, list[float]] = {}
    diags = [m.diagonal() for m in mu.matrices]
    for seed in seeds:
        traj = Trajectory(mu, seed)
        idx = traj.indices(ns[-1])
        vals = []
        x = Fraction(1)
        done = 0
        for n in ns:
            for a in idx[done:n]:
                x *= diags[a][i - 1]
            done = n
            vals.append(height(qn_approximant(profile, i, n) / x) / n)
        per_seed[seed] = vals
    means = [sum(v[k] for v in per_seed.values()) / len(per_seed) for k in range(len(ns))]
    return QniTable(ns, means, per_seed, i)


# --- pi_n^P and the gauge estimate ---------------------------------------------

def pi_np(points: Mapping[Place, Any], n: int, profile: DriftProfile) -> HPoint:
    """z q_n with z^p = Z^p (approximants) for p in P and the identity elsewhere.

    ``points`` maps each place of P to a BoundaryPoint (or a unipotent
    TriMatrix); uncertified boundary points raise a warning.
    """
    d = profile.dim
    qn = TriMatrix.diag([qn_approximant(profile, i, n) for i in range(1, d + 1)])
    at = {}
    for pl, z in points.items():
        if not isinstance(z, TriMatrix):
            if not z.certified:
                warnings.warn(f"boundary point at {pl} is not certified", stacklevel=2)
            z = z.matrix()
        at[pl] = multiply(z, qn)
    return HPoint(qn, at)


@dataclass
class EstimgaugeRecord:
    seed: int
    n: int
    statistic: float
    certified: bool
    places: list[str]


def estimgauge_value(
    traj: Trajectory,
    profile: DriftProfile,
    n: int,
    places: Sequence[Place],
    approx_steps: int | None = None,
) -> EstimgaugeRecord:
    """||x_n^{-1} pi_n^P(Z^P)|| / n with Z^p approximated from ``approx_steps`` steps."""
    from .boundary import assemble_boundary_point

    N = approx_steps if approx_steps is not None else 3 * n
    points = {}
    certified = True
    for pl in places:
        bp = assemble_boundary_point(traj, profile, pl, N)
        certified &= bp.certified
        points[pl] = bp.matrix()
    h = HPoint.from_rational(inverse(traj.position(n))) @ pi_np(points, n, profile)
    return EstimgaugeRecord(traj.seed, n, adelic_length(h) / n, certified, [str(p) for p in places])


def estimgauge_statistic(
    mu: StepMeasure,
    seeds: Iterable[int],
    n: int,
    places: Sequence[Place] | None = None,
    approx_steps: int | None = None,
) -> list[EstimgaugeRecord]:
    profile = drift_profile(mu)
    P = list(places) if places is not None else relevant_places(mu)
    if INF not in P:
        raise ValueError("P must contain the archimedean place")
    return [estimgauge_value(Trajectory(mu, s), profile, n, P, approx_steps) for s in seeds]


def quantile(values: Sequence[float], q: float) -> float:
    """Empirical quantile (linear interpolation, as numpy's default)."""
    import numpy as np

    return float(np.quantile(np.asarray(values, dtype=float), q))
