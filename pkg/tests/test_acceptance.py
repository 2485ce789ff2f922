"""Acceptance criteria 1-10, each at its stated tolerance and runtime.

Every criterion records one PASS/FAIL line; the lines are printed at the end
of the pytest run (see conftest.py) or directly when run as a script.
"""

from __future__ import annotations

import json
import math
import random
import time
from fractions import Fraction
from pathlib import Path

from boundarylab.boundary import assemble_boundary_point, snl_series
from boundarylab.bruhat import cell_of, weyl_from_phi
from boundarylab.entropy import GroupDistribution, entropy, entropy_sequence
from boundarylab.gauge import (
    count_height_ball,
    estimgauge_statistic,
    exp_floor,
    gauge_report,
    qni_statistic,
    quantile,
)
from boundarylab.rational import INF, LogCombination, Place, product_formula_check, valuation
from boundarylab.triangular import (
    SubspaceBasis,
    TriMatrix,
    appendix_rows,
    det_laplace,
    submatrix,
    subsets_containing_last,
    wedge_rep,
)
from boundarylab.walk import StepMeasure, Trajectory, drift_profile

from oracles import brute_force_weyl, log_value

RESULTS: list[str] = []
CONFIGS = Path(__file__).resolve().parents[1] / "src" / "boundarylab" / "configs"

BIASED_AFFINE = StepMeasure([(TriMatrix([["1/2", 1], [0, 1]]), "3/4"), (TriMatrix([[2, 1], [0, 1]]), "1/4")])
DIRAC_AFFINE = StepMeasure.dirac(TriMatrix([["1/2", 1], [0, 1]]))
DIRAC_DIAG = StepMeasure.dirac(TriMatrix.diag(["1/2", 1]))
FREE = StepMeasure.uniform([TriMatrix.diag([2, 1]), TriMatrix([[2, 1], [0, 1]])])


def record(num: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)


def shipped() -> list[tuple[str, dict, StepMeasure]]:
    out = []
    for p in sorted(CONFIGS.glob("*.json")):
        raw = json.loads(p.read_text())
        out.append((p.stem, raw, StepMeasure.from_json(raw)))
    return out


def _rand_tri(rng: random.Random, d: int) -> TriMatrix:
    def q() -> Fraction:
        return Fraction(rng.randint(-20, 20), rng.randint(1, 12))

    def nz() -> Fraction:
        return Fraction(rng.choice([-1, 1]) * rng.randint(1, 20), rng.randint(1, 12))

    return TriMatrix([[nz() if i == j else (q() if j > i else 0) for j in range(d)] for i in range(d)])


def test_01_appendix_identity():
    rng = random.Random(2024)
    t0 = time.perf_counter()
    checks = failures = 0
    for _ in range(500):
        d = rng.randint(2, 5)
        a = _rand_tri(rng, d)
        for J in subsets_containing_last(d):
            ls = [l for l in range(1, d) if l not in J]
            if not ls:
                continue
            basis = SubspaceBasis(d, J)
            w = wedge_rep(a, basis)
            for l in ls:
                rows = appendix_rows(basis.J, l, d)
                lhs = w.entry(basis.index[rows], basis.m)
                rhs = det_laplace(submatrix(a, rows, basis.J))
                checks += 1
                failures += lhs != rhs
    dt = time.perf_counter() - t0
    ok = failures == 0 and dt < 10
    record(1, ok, f"appendix identity: {checks} (J, l) checks on 500 matrices, {failures} failures, {dt:.2f}s (< 10s)")
    assert ok


def test_02_product_formula():
    rng = random.Random(7)
    qs = [Fraction(rng.randint(1, 10**6) * rng.choice([-1, 1]), rng.randint(1, 10**6)) for _ in range(1000)]
    t0 = time.perf_counter()
    failures = sum(not product_formula_check(q) for q in qs)
    dt = time.perf_counter() - t0
    ok = failures == 0 and dt < 1
    record(2, ok, f"product formula: 1000 rationals, {failures} failures, {dt:.3f}s (< 1s)")
    assert ok


def test_03_weyl_rule_oracle():
    rng = random.Random(99)
    vectors = []
    for k in range(1000):
        d = rng.randint(2, 5)
        if k % 2:
            # one prime place: small integer coefficients give many ties
            vectors.append([LogCombination.single(5, rng.randint(-2, 2)) for _ in range(d)])
        else:
            vectors.append([LogCombination({p: Fraction(rng.randint(-3, 3), rng.randint(1, 2))
                                            for p in (2, 3) if rng.random() < 0.8}) for _ in range(d)])
    t0 = time.perf_counter()
    mismatches = nonunique = 0
    for phi in vectors:
        found = brute_force_weyl([log_value(x.coeffs) for x in phi])
        nonunique += len(found) != 1
        mismatches += not found or weyl_from_phi(phi).perm != found[0]
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and nonunique == 0 and dt < 5
    record(3, ok, f"Weyl rule: 1000 drift vectors, {mismatches} mismatches, {nonunique} non-unique, {dt:.2f}s (< 5s)")
    assert ok


def test_04_biased_affine_reproduction():
    prof = drift_profile(BIASED_AFFINE)
    point2 = cell_of(prof, Place(2)).is_point()
    line_inf = cell_of(prof, INF).free == {(1, 2)}
    predicted = -0.5 * math.log(2)
    good = 0
    ratios = []
    for seed in range(20):
        bp = assemble_boundary_point(Trajectory(BIASED_AFFINE, seed), prof, INF, 2000)
        rep = bp.columns[2].report
        r = rep.observed_slope / predicted if rep.observed_slope is not None else math.nan
        ratios.append(r)
        good += bp.certified and abs(rep.predicted_slope - predicted) < 1e-12 and abs(r - 1) <= 0.15
    ok = point2 and line_inf and good >= 18
    record(4, ok, f"biased affine d=2: point at 2={point2}, line at inf={line_inf}, "
                  f"{good}/20 seeds certified with slope within 15% (ratios {min(ratios):.3f}..{max(ratios):.3f})")
    assert ok


def test_05_lln_drift():
    target = 0.5 * math.log(2)
    n = 10**4
    good = 0
    for seed in range(100):
        v = Trajectory(BIASED_AFFINE, seed).diagonal_valuations(n, 2)[0]
        good += abs(-v * math.log(2) / n - target) <= 0.05
    ok = good >= 95
    record(5, ok, f"LLN drift: {good}/100 seeds within 0.05 of ln2/2 at n=10^4 (need 95)")
    assert ok


def test_06_gauge_growth():
    t0 = time.perf_counter()
    reports = [gauge_report(k, 2, materialize=True) for k in (1, 2, 3)]
    k0 = math.log(6)
    scalar = count_height_ball(exp_floor(k0))
    dt = time.perf_counter() - t0
    ok = (all(r.passed and r.method == "enumeration+count" for r in reports)
          and scalar == 26 and scalar <= 2 * math.exp(2 * k0) and dt < 60)
    cards = ", ".join(f"k={r.k}: {r.cardinality} <= {r.bound:.3g}" for r in reports)
    record(6, ok, f"gauge growth d=2 ({cards}); scalar count at ln 6 = {scalar} <= 72; {dt:.2f}s (< 60s)")
    assert ok


def test_07_qni_statistic():
    t = qni_statistic(BIASED_AFFINE, range(100), [10, 100, 1000])
    dirac = qni_statistic(DIRAC_DIAG, range(100), [10, 100, 1000])
    zero = all(v == 0 for vals in dirac.per_seed.values() for v in vals)
    ok = t.decreasing and zero
    means = ", ".join(f"{m:.4f}" for m in t.means)
    record(7, ok, f"qni statistic: means over 100 seeds at n=10,100,1000 = {means} "
                  f"(strictly decreasing={t.decreasing}); Dirac diag(1/2,1) identically 0={zero}")
    assert ok


def test_08_estimgauge_statistic():
    recs = estimgauge_statistic(BIASED_AFFINE, range(50), 200)
    q90 = quantile([r.statistic for r in recs], 0.9)
    dirac = [estimgauge_statistic(DIRAC_AFFINE, [0], n)[0].statistic for n in (50, 100, 200)]
    mono = dirac[0] > dirac[1] > dirac[2]
    ok = q90 <= 0.1 and mono
    record(8, ok, f"estimgauge: q90 over 50 seeds at n=200 = {q90:.4f} (<= 0.1); Dirac values at "
                  f"n=50,100,200 = {', '.join(f'{v:.5f}' for v in dirac)} (decreasing={mono})")
    assert ok


def test_09_entropy_machinery():
    h = entropy(GroupDistribution.from_measure(FREE))
    exact_two = h == math.log(2)
    seq = entropy_sequence(FREE, 15)
    n_ln2 = (not seq.truncated and len(seq.rows) == 15
             and all(r.support_size == 2**r.n and math.isclose(r.H, r.n * math.log(2), rel_tol=1e-13)
                     for r in seq.rows))
    monotone = {}
    for name, raw, mu in shipped():
        monotone[name] = entropy_sequence(mu, raw.get("options", {}).get("n_max", 8)).increments_nonincreasing()
    ok = exact_two and n_ln2 and all(monotone.values())
    record(9, ok, f"entropy: H(uniform 2-atom)==ln2: {exact_two}; H(mu^n)=n ln2 with 2^n atoms up to n=15: {n_ln2}; "
                  f"non-increasing increments on {sorted(k for k, v in monotone.items() if v)}")
    assert ok


def _within(place: Place, s: Fraction, z) -> bool:
    if s == z.value:
        return True
    if place.is_infinite:
        return z.error_bound is not None and abs(s - z.value) <= z.error_bound
    return z.error_exponent is not None and valuation(s - z.value, place.prime) >= z.error_exponent


def test_10_cross_validation():
    runs = skipped = entries = disagreements = 0
    for name, raw, mu in shipped():
        prof = drift_profile(mu)
        steps = raw.get("steps", 1000)
        seeds = raw.get("seeds", [raw.get("seed", 0)])
        for seed in seeds[:5]:
            for pl in [Place.parse(str(p)) for p in prof.places]:
                bp = assemble_boundary_point(Trajectory(mu, seed), prof, pl, steps)
                if not bp.certified:
                    skipped += 1
                    continue
                runs += 1
                for (l, j), z in bp.entries.items():
                    later = steps + steps // 2
                    s = snl_series(Trajectory(mu, seed), prof, pl, l, later, column=j)
                    entries += 1
                    disagreements += not (_within(pl, s[steps - 1], z) and _within(pl, s[later - 1], z))
    ok = disagreements == 0 and runs > 0
    record(10, ok, f"S_n^l vs wedge-assembled Z: {runs} certified runs ({skipped} uncertified skipped), {entries} entries checked at n and 1.5n, "
                   f"{disagreements} outside certified error")
    assert ok


if __name__ == "__main__":
    import sys

    failed = 0
    for name, fn in sorted((k, v) for k, v in dict(globals()).items() if k.startswith("test_")):
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
