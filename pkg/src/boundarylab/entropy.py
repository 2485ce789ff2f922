"""Exact entropy of finitely supported measures on A(Q) and their convolution powers.

Only the unconditional entropy H(mu^{*n}) and its increments are computed;
the conditional (boundary) entropy is not constructible from finite data.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping

import mpmath

from .gauge import GaugeReport, adelic_length, ceil_log, gauge_report, rational_length_exp
from .rational import format_rational
from .triangular import TriMatrix, inverse, multiply
from .walk import StepMeasure

SUPPORT_GUARD = 5 * 10**5
ENTROPY_DPS = 40


class SupportGuardExceeded(RuntimeError):
    def __init__(self, needed: int, guard: int) -> None:
        super().__init__(f"convolution would touch {needed} atom pairs, guard is {guard}")
        self.needed = needed
        self.guard = guard


@dataclass(frozen=True)
class GroupDistribution:
    """Finitely supported probability on A(Q); equal matrices share one key."""

    dim: int
    weights: Mapping[TriMatrix, Fraction] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(w <= 0 for w in self.weights.values()):
            raise ValueError("weights must be positive")
        if sum(self.weights.values(), Fraction(0)) != 1:
            raise ValueError("weights must sum to 1")
        if any(m.dim != self.dim for m in self.weights):
            raise ValueError("mixed dimensions")

    @classmethod
    def from_measure(cls, mu: StepMeasure) -> GroupDistribution:
        out: dict[TriMatrix, Fraction] = {}
        for m, w in mu.atoms:
            out[m] = out.get(m, Fraction(0)) + w
        return cls(mu.dim, out)

    @classmethod
    def dirac(cls, g: TriMatrix) -> GroupDistribution:
        return cls(g.dim, {g: Fraction(1)})

    @property
    def support_size(self) -> int:
        return len(self.weights)

    def to_json(self) -> dict[str, Any]:
        items = sorted((m.key(), format_rational(w)) for m, w in self.weights.items())
        return {"dimension": self.dim, "atoms": [{"key": k, "weight": w} for k, w in items]}


def entropy(rho: GroupDistribution, dps: int = ENTROPY_DPS) -> float:
    """-sum rho(g) ln rho(g), accumulated at ``dps`` digits from exact weights."""
    with mpmath.workdps(dps):
        s = mpmath.mpf(0)
        for w, count in Counter(rho.weights.values()).items():
            if w != 1:
                lw = mpmath.log(w.numerator) - mpmath.log(w.denominator)
                s -= count * mpmath.mpf(w.numerator) / w.denominator * lw
        return float(s)


def convolve(rho: GroupDistribution, sigma: GroupDistribution, guard: int = SUPPORT_GUARD) -> GroupDistribution:
    """Law of g h for independent g ~ rho, h ~ sigma."""
    if rho.dim != sigma.dim:
        raise ValueError("dimension mismatch")
    pairs = rho.support_size * sigma.support_size
    if pairs > guard:
        raise SupportGuardExceeded(pairs, guard)
    out: dict[TriMatrix, Fraction] = {}
    for g, a in rho.weights.items():
        for h, b in sigma.weights.items():
            gh = multiply(g, h)
            out[gh] = out.get(gh, 0) + a * b
    return GroupDistribution(rho.dim, out)


@dataclass
class EntropyRow:
    n: int
    H: float
    increment: float | None
    support_size: int


@dataclass
class EntropySequence:
    rows: list[EntropyRow]
    truncated: bool
    reason: str = ""

    def increments_nonincreasing(self, tol: float = 1e-12) -> bool:
        inc = [r.increment for r in self.rows if r.increment is not None]
        return all(b <= a + tol for a, b in zip(inc, inc[1:]))

    def csv_rows(self) -> list[list[Any]]:
        out: list[list[Any]] = [["n", "H", "increment", "support_size"]]
        for r in self.rows:
            out.append([r.n, r.H, "" if r.increment is None else r.increment, r.support_size])
        return out


def entropy_sequence(mu: StepMeasure, n_max: int, guard: int = SUPPORT_GUARD) -> EntropySequence:
    """H(mu^{*n}) for n = 1..n_max; increment at n is H(mu^{*(n+1)}) - H(mu^{*n}).

    Stops early (``truncated``) when the next convolution would exceed the guard;
    the last row then has no increment.
    """
    base = GroupDistribution.from_measure(mu)
    cur = base
    hs = [(1, entropy(cur), cur.support_size)]
    truncated, reason = False, ""
    for n in range(2, n_max + 2):
        try:
            cur = convolve(cur, base, guard)
        except SupportGuardExceeded as exc:
            truncated, reason = n <= n_max, str(exc)
            break
        hs.append((n, entropy(cur), cur.support_size))
    rows = []
    for idx, (n, h, size) in enumerate(hs[:n_max]):
        inc = hs[idx + 1][1] - h if idx + 1 < len(hs) else None
        rows.append(EntropyRow(n, h, inc, size))
    return EntropySequence(rows, truncated, reason)


def gauge_index(g: TriMatrix) -> int:
    """|g|_G = min{n : g in G_n^Id} = ceil(||g^{-1}||), decided exactly."""
    return ceil_log(rational_length_exp(inverse(g)))


@dataclass
class DerriennicReport:
    first_moment: Fraction
    finite: bool
    entropy: float
    gauge_reports: list[GaugeReport]
    per_atom: list[tuple[str, int, float]]

    @property
    def finite_entropy_certified(self) -> bool:
        return self.finite and all(r.passed for r in self.gauge_reports)

    def to_json(self) -> dict[str, Any]:
        return {
            "first_moment": format_rational(self.first_moment),
            "first_moment_float": float(self.first_moment),
            "finite": self.finite,
            "entropy": self.entropy,
            "finite_entropy_certified": self.finite_entropy_certified,
            "gauge_growth": [r.to_json() for r in self.gauge_reports],
            "atoms": [{"key": k, "gauge_index": i, "length_of_inverse": L} for k, i, L in self.per_atom],
        }


def derriennic_check(mu: StepMeasure, ks: Iterable[float] = (1, 2)) -> DerriennicReport:
    """First moment of mu for the gauges G_n^Id, paired with their growth check.

    Growth is verified by exact counting (no materialization) so it also
    applies for d > 2.
    """
    per_atom = []
    moment = Fraction(0)
    for m, w in mu.atoms:
        idx = gauge_index(m)
        moment += w * idx
        per_atom.append((m.key(), idx, adelic_length(inverse(m))))
    reports = [gauge_report(k, mu.dim, materialize=False) for k in ks]
    H = entropy(GroupDistribution.from_measure(mu))
    return DerriennicReport(moment, True, H, reports, per_atom)
