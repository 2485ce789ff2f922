"""Command line orchestration: ``boundarylab <command> --config path [--out dir]``.

Exit codes: 0 pass, 1 config or usage error, 2 acceptance failure,
3 budget refusal (gauge budget, convolution guard, bit-size guard).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Sequence

import jsonschema

from .boundary import BitSizeExceeded, ConsistencyError, assemble_boundary_point, wedge_discrepancy
from .bruhat import WeylPerm, cell_of, factorize_u
from .entropy import SupportGuardExceeded, derriennic_check, entropy_sequence
from .gauge import (
    GaugeBudgetExceeded,
    count_height_ball,
    estimgauge_value,
    exp_floor,
    gauge_report,
    qni_statistic,
    quantile,
)
from .rational import INF, Place, format_rational, log_abs, product_formula_check, valuation
from .triangular import MAX_DIMENSION, TriMatrix, appendix_identity_check, multiply, subsets_containing_last
from .walk import MeasureError, StepMeasure, Trajectory, drift_profile, moment_value, relevant_places

EXIT_OK, EXIT_CONFIG, EXIT_FAIL, EXIT_BUDGET = 0, 1, 2, 3
OUT_ENV = "BOUNDARYLAB_OUT"

RATIONAL = {"type": ["string", "integer"]}
CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "boundarylab experiment",
    "type": "object",
    "properties": {
        "dimension": {"type": "integer", "minimum": 1, "maximum": MAX_DIMENSION},
        "atoms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "matrix": {"type": "array", "items": {"type": "array", "items": RATIONAL}},
                    "weight": RATIONAL,
                },
                "required": ["matrix", "weight"],
            },
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}},
        "steps": {"type": "integer", "minimum": 1},
        "places": {
            "oneOf": [
                {"const": "auto"},
                {"type": "array", "items": {"type": ["string", "integer"]}, "minItems": 1},
            ]
        },
        "workers": {"type": "integer", "minimum": 1},
        "options": {"type": "object"},
        "acceptance": {
            "type": "object",
            "properties": {
                "qni_decreasing": {"type": "boolean"},
                "estimgauge_q90": {"type": "number"},
                "rate_tolerance": {"type": "number"},
                "min_pass_fraction": {"type": "number"},
                "lln_tol": {"type": "number"},
            },
        },
    },
    "required": ["dimension"],
}

COMMANDS = (
    "drift",
    "cell",
    "walk",
    "boundary",
    "gauge-growth",
    "qni",
    "estimgauge",
    "entropy",
    "check-identities",
)
NEEDS_MEASURE = {"drift", "cell", "walk", "boundary", "qni", "estimgauge", "entropy"}


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit 2, which means acceptance failure here
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


# --- config -------------------------------------------------------------------

class Experiment:
    def __init__(self, raw: dict[str, Any], command: str) -> None:
        try:
            jsonschema.validate(raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{where}: {exc.message}") from None
        self.raw = raw
        self.dim: int = raw["dimension"]
        self.options: dict[str, Any] = raw.get("options", {})
        self.acceptance: dict[str, Any] = raw.get("acceptance", {})
        self.steps: int = raw.get("steps", 1000)
        self.workers: int = raw.get("workers", 1)
        if "seeds" in raw:
            self.seeds = sorted(set(raw["seeds"]))
        else:
            self.seeds = [raw.get("seed", 0)]
        self.mu: StepMeasure | None = None
        if "atoms" in raw:
            try:
                self.mu = StepMeasure.from_json(raw)
            except (MeasureError, ValueError) as exc:
                raise ConfigError(f"measure: {exc}") from None
        elif command in NEEDS_MEASURE:
            raise ConfigError(f"command {command!r} needs 'atoms'")
        places = raw.get("places", "auto")
        if places == "auto":
            self.places = relevant_places(self.mu) if self.mu else [INF]
        else:
            try:
                self.places = sorted({Place.parse(str(p)) for p in places})
            except ValueError as exc:
                raise ConfigError(f"places: {exc}") from None

    def opt(self, key: str, default: Any) -> Any:
        return self.options.get(key, default)


def load_config(path: Path, command: str) -> Experiment:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    return Experiment(raw, command)


# --- output -------------------------------------------------------------------

class Output:
    def __init__(self, root: Path, command: str, timestamp: bool) -> None:
        self.dir = root / command
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.timestamp = timestamp
        self.files: list[str] = []

    def csv(self, name: str, rows: Sequence[Sequence[Any]]) -> None:
        with open(self.dir / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerows(rows)
        self.files.append(name)

    def summary(self, passed: bool, results: Any) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "command": self.command,
            "pass": passed,
            "files": sorted(self.files),
            "results": results,
        }
        if self.timestamp:
            doc["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
        with open(self.dir / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return doc


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, Fraction):
        return format_rational(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, Place):
        return str(x)
    return x


def _map_seeds(fn: Callable[..., Any], exp: Experiment, *args: Any) -> list[Any]:
    """fn(raw_config, seed, *args) per seed, optionally in worker processes;
    results come back in seed order either way."""
    jobs = [(exp.raw, s) + args for s in exp.seeds]
    if exp.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=exp.workers) as pool:
            return list(pool.map(fn, *zip(*jobs)))
    return [fn(*j) for j in jobs]


# --- commands -----------------------------------------------------------------

def cmd_drift(exp: Experiment, out: Output) -> bool:
    assert exp.mu is not None
    prof = drift_profile(exp.mu)
    mom = moment_value(exp.mu)
    rows = [["place", "i", "phi"]]
    for pl in exp.places:
        for i, v in enumerate(prof.phi_float(pl), start=1):
            rows.append([str(pl), i, v])
    out.csv("drift.csv", rows)
    out.summary(True, {
        "profile": prof.to_json(),
        "moment": {"total": mom.total, "per_place": {str(k): v for k, v in mom.per_place.items()}},
    })
    return True


def cmd_cell(exp: Experiment, out: Output) -> bool:
    assert exp.mu is not None
    prof = drift_profile(exp.mu)
    cells = []
    for pl in exp.places:
        c = cell_of(prof, pl)
        cells.append(dict(c.to_json(), kind="point" if c.is_point() else f"{len(c.free)}-dim cell"))
    out.summary(True, {"cells": cells})
    return True


def _walk_seed(raw: dict[str, Any], seed: int, steps: int, places: list[str]) -> list[list[Any]]:
    mu = StepMeasure.from_json(raw)
    prof = drift_profile(mu)
    diag = Trajectory(mu, seed).diagonal(steps)
    rows = []
    for tag in places:
        pl = Place.parse(tag)
        phi = prof.phi_float(pl)
        for i, x in enumerate(diag, start=1):
            if pl.is_infinite:
                emp = log_abs(x) / steps
            else:
                emp = -valuation(x, pl.prime) * math.log(pl.prime) / steps
            rows.append([seed, str(pl), i, emp, phi[i - 1]])
    return rows


def cmd_walk(exp: Experiment, out: Output) -> bool:
    n = exp.steps
    per_seed = _map_seeds(_walk_seed, exp, n, [str(p) for p in exp.places])
    rows = [r for block in per_seed for r in block]
    out.csv("walk.csv", [["seed", "place", "i", "empirical", "drift"]] + rows)
    tol = exp.acceptance.get("lln_tol")
    passed = True
    frac = None
    if tol is not None:
        ok_seeds = sum(all(abs(r[3] - r[4]) <= tol for r in block) for block in per_seed)
        frac = ok_seeds / len(per_seed)
        passed = frac >= exp.acceptance.get("min_pass_fraction", 1.0)
    out.summary(passed, {"steps": n, "seeds": len(exp.seeds), "lln_pass_fraction": frac})
    return passed


def _boundary_seed(raw: dict[str, Any], seed: int, steps: int, places: list[str]) -> dict[str, Any]:
    mu = StepMeasure.from_json(raw)
    prof = drift_profile(mu)
    traj = Trajectory(mu, seed)
    res: dict[str, Any] = {"seed": seed, "points": [], "history": []}
    for tag in places:
        bp = assemble_boundary_point(traj, prof, Place.parse(tag), steps)
        doc = bp.to_json()
        doc["wedge_discrepancy"] = {str(j): v for j, v in wedge_discrepancy(bp).items()}
        res["points"].append(doc)
        for j, col in sorted(bp.columns.items()):
            res["history"] += [[seed, tag, j, n, v] for n, v in col.report.history]
    return res


def cmd_boundary(exp: Experiment, out: Output) -> bool:
    results = _map_seeds(_boundary_seed, exp, exp.steps, [str(p) for p in exp.places])
    hist = [h for r in results for h in r.pop("history")]
    out.csv("convergence.csv", [["seed", "place", "column", "n", "value"]] + hist)
    tol = exp.acceptance.get("rate_tolerance")
    good = 0
    for r in results:
        ok = all(p["certified"] for p in r["points"])
        if tol is not None:
            for p in r["points"]:
                for col in p["columns"].values():
                    ratio = col["rate_ratio"]
                    ok &= ratio is not None and abs(ratio - 1) <= tol
        r["pass"] = ok
        good += ok
    frac = good / len(results)
    passed = frac >= exp.acceptance.get("min_pass_fraction", 1.0)
    out.summary(passed, {"steps": exp.steps, "pass_fraction": frac, "seeds": results})
    return passed


def cmd_gauge_growth(exp: Experiment, out: Output) -> bool:
    ks = exp.opt("k", [1, 2, 3])
    materialize = exp.opt("materialize", exp.dim <= 2)
    reports = [gauge_report(k, exp.dim, materialize=materialize) for k in ks]
    out.csv("gauge.csv", [["k", "cardinality", "bound", "pass"]] + [r.to_row() for r in reports])
    k0 = math.log(6)
    scalar = {"k": k0, "count": count_height_ball(exp_floor(k0)), "bound": 2 * math.exp(2 * k0)}
    scalar["pass"] = scalar["count"] <= scalar["bound"]
    passed = all(r.passed for r in reports) and scalar["pass"]
    out.summary(passed, {"gauges": [r.to_json() for r in reports], "scalar_ball": scalar})
    return passed


def cmd_qni(exp: Experiment, out: Output) -> bool:
    assert exp.mu is not None
    n_list = exp.opt("qni_n", [10, 100, 1000])
    i = exp.opt("index", 1)
    table = qni_statistic(exp.mu, exp.seeds, n_list, i)
    out.csv("qni.csv", table.csv_rows())
    passed = table.decreasing if exp.acceptance.get("qni_decreasing", True) else True
    out.summary(passed, {"index": i, "n": table.n_list, "means": table.means, "decreasing": table.decreasing})
    return passed


def _estimgauge_seed(raw: dict[str, Any], seed: int, n: int, places: list[str], approx: int | None) -> list[Any]:
    mu = StepMeasure.from_json(raw)
    rec = estimgauge_value(Trajectory(mu, seed), drift_profile(mu), n, [Place.parse(t) for t in places], approx)
    return [rec.seed, rec.n, rec.statistic, rec.certified]


def cmd_estimgauge(exp: Experiment, out: Output) -> bool:
    if INF not in exp.places:
        raise ConfigError("estimgauge needs the place 'inf' in P")
    n_list = exp.opt("estimgauge_n", [200])
    approx = exp.opt("approx_steps", None)
    rows = []
    for n in n_list:
        rows += _map_seeds(_estimgauge_seed, exp, n, [str(p) for p in exp.places], approx)
    out.csv("estimgauge.csv", [["seed", "n", "statistic", "certified"]] + rows)
    summary = []
    for n in n_list:
        vals = [r[2] for r in rows if r[1] == n]
        summary.append({"n": n, "mean": sum(vals) / len(vals), "q90": quantile(vals, 0.9),
                        "all_certified": all(r[3] for r in rows if r[1] == n)})
    threshold = exp.acceptance.get("estimgauge_q90")
    passed = threshold is None or summary[-1]["q90"] <= threshold
    out.summary(passed, {"places": [str(p) for p in exp.places], "by_n": summary})
    return passed


def cmd_entropy(exp: Experiment, out: Output) -> bool:
    assert exp.mu is not None
    seq = entropy_sequence(exp.mu, exp.opt("n_max", 10))
    out.csv("entropy.csv", seq.csv_rows())
    der = derriennic_check(exp.mu, exp.opt("gauge_k", [1, 2]))
    passed = seq.increments_nonincreasing() and der.finite_entropy_certified
    out.summary(passed, {
        "truncated": seq.truncated,
        "truncation_reason": seq.reason,
        "increments_nonincreasing": seq.increments_nonincreasing(),
        "derriennic": der.to_json(),
        "note": "unconditional entropy of convolution powers; the conditional entropy is not computed",
    })
    return passed


def _random_rational(rng: random.Random, bound: int = 50) -> Fraction:
    return Fraction(rng.randint(-bound, bound) or 1, rng.randint(1, bound))


def _random_tri(rng: random.Random, d: int) -> TriMatrix:
    return TriMatrix([[_random_rational(rng) if j > i else (_random_rational(rng) if j == i else 0)
                       for j in range(d)] for i in range(d)])


def cmd_check_identities(exp: Experiment, out: Output) -> bool:
    rng = random.Random(exp.opt("seed", exp.seeds[0]))
    n_app = exp.opt("appendix_instances", 500)
    n_pf = exp.opt("product_formula_instances", 1000)
    n_fac = exp.opt("factorization_instances", 200)
    dims = exp.opt("dimensions", [2, 3, 4, 5])

    app_fail = 0
    for _ in range(n_app):
        d = rng.choice(dims)
        a = _random_tri(rng, d)
        J = rng.choice(subsets_containing_last(d))
        ls = [l for l in range(1, d) if l not in J]
        if not ls:
            continue
        app_fail += not appendix_identity_check(a, J, rng.choice(ls))

    pf_fail = sum(not product_formula_check(_random_rational(rng, 10**6)) for _ in range(n_pf))

    fac_fail = 0
    for _ in range(n_fac):
        d = rng.choice(dims)
        u = TriMatrix([[1 if i == j else (_random_rational(rng) if j > i else 0) for j in range(d)] for i in range(d)])
        perm = list(range(1, d + 1))
        rng.shuffle(perm)
        f, x = factorize_u(u, WeylPerm(tuple(perm)))
        fac_fail += multiply(f, x) != u

    suites = {
        "appendix_identity": {"instances": n_app, "failures": app_fail},
        "product_formula": {"instances": n_pf, "failures": pf_fail},
        "factorization": {"instances": n_fac, "failures": fac_fail},
    }
    rows = [["suite", "instances", "failures"]] + [[k, v["instances"], v["failures"]] for k, v in suites.items()]
    out.csv("identities.csv", rows)
    passed = not (app_fail or pf_fail or fac_fail)
    out.summary(passed, suites)
    return passed


HANDLERS: dict[str, Callable[[Experiment, Output], bool]] = {
    "drift": cmd_drift,
    "cell": cmd_cell,
    "walk": cmd_walk,
    "boundary": cmd_boundary,
    "gauge-growth": cmd_gauge_growth,
    "qni": cmd_qni,
    "estimgauge": cmd_estimgauge,
    "entropy": cmd_entropy,
    "check-identities": cmd_check_identities,
}


def run(command: str, config: Path, out: Path | None = None, timestamp: bool = True) -> int:
    if command not in HANDLERS:
        print(f"unknown command {command!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        exp = load_config(config, command)
        root = out or Path(os.environ.get(OUT_ENV, "boundarylab-out"))
        passed = HANDLERS[command](exp, Output(Path(root), command, timestamp))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GaugeBudgetExceeded, SupportGuardExceeded, BitSizeExceeded) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ConsistencyError as exc:
        print(f"inconsistent drift data: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"{command}: {'pass' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="boundarylab", description="Boundary and entropy experiments for random walks on A(Q).")
    parser.add_argument("command", help="one of: " + ", ".join(COMMANDS) + ", schema")
    parser.add_argument("--config", type=Path, help="experiment JSON")
    parser.add_argument("--out", type=Path, default=None, help=f"output root (default ${OUT_ENV} or ./boundarylab-out)")
    parser.add_argument("--no-timestamp", action="store_true", help="omit the timestamp for byte-identical output")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(CONFIG_SCHEMA, indent=2, sort_keys=True))
        return EXIT_OK
    if args.command not in HANDLERS:
        print(f"unknown command {args.command!r}; expected one of {', '.join(COMMANDS)}", file=sys.stderr)
        return EXIT_CONFIG
    if args.config is None:
        print("--config is required", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.command, args.config, args.out, not args.no_timestamp)


if __name__ == "__main__":
    sys.exit(main())
