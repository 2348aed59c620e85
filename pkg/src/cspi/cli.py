"""Command line entry point: ``cspi {simulate,analyze,benchmark,oracle}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import CutoffGrid, SplitSpec
from .dgp import DGPS, TrueValueOracle, load_csv, parse_schema
from .harness import ExperimentPlan, benchmark_plans, emit_outputs, fmt, parse_range, read_config, run_plan
from .inference import CriticalValueSpec
from .nuisance import NuisanceModelSpec
from .pipeline import METHODS, MethodConfig, run_method


def _add_sim_args(p):
    p.add_argument("--config", help="flat key = value file or a manifest.json to replay")
    p.add_argument("--dgp", choices=DGPS)
    p.add_argument("--n", type=int)
    p.add_argument("--gammas", help="lo:hi:num or comma list")
    p.add_argument("--reps", type=int, dest="replications")
    p.add_argument("--methods", help="comma list of " + ", ".join(METHODS))
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", help="lo:hi:num or comma list of cutoffs")
    p.add_argument("--baseline", type=float)
    p.add_argument("--n-sim", type=int, dest="n_sim")
    p.add_argument("--zeta", type=float)
    p.add_argument("--folds", type=int, dest="k_folds")
    p.add_argument("--basis", choices=("auto", "raw", "indicators"))
    p.add_argument("--inflation", type=float, dest="hcpi_inflation")
    p.add_argument("--range-bound", type=float, dest="hcpi_range_bound")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cspi", description="Safe threshold-policy improvement experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a gamma sweep on a synthetic design")
    _add_sim_args(sim)

    ana = sub.add_parser("analyze", help="run one method once on a CSV file")
    ana.add_argument("--input", required=True)
    ana.add_argument("--schema", required=True, help="score=COL,treatment=COL,outcome=COL[,covariates=A+B][,weight=COL]")
    ana.add_argument("--baseline-cutoff", type=float, required=True)
    ana.add_argument("--grid", required=True, help="lo:hi:num or comma list")
    ana.add_argument("--gamma", type=float, default=0.05)
    ana.add_argument("--method", choices=METHODS, default="CSPI")
    ana.add_argument("--seed", type=int, default=0)
    ana.add_argument("--delimiter", default=",")
    ana.add_argument("--n-sim", type=int, default=10_000)
    ana.add_argument("--zeta", type=float, default=0.2)
    ana.add_argument("--folds", type=int, default=5)
    ana.add_argument("--outcome-model", choices=("ols", "logistic"), default="ols")
    ana.add_argument("--range-bound", type=float, default=66.0)
    ana.add_argument("--inflation", type=float, default=2.0)

    bench = sub.add_parser("benchmark", help="full multi-method sweep on DGP1-3")
    bench.add_argument("--reps", type=int, default=500)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--n", type=int, default=2000)
    bench.add_argument("--n-sim", type=int, default=10_000)
    bench.add_argument("--dgps", default="DGP1,DGP2,DGP3")
    bench.add_argument("--out", required=True)

    orc = sub.add_parser("oracle", help="print true policy differences for a design")
    orc.add_argument("--dgp", choices=DGPS, required=True)
    orc.add_argument("--grid", default="-2:2:41")
    orc.add_argument("--baseline", type=float)
    return parser


def _plan_from_args(args) -> ExperimentPlan:
    mapping = read_config(args.config) if args.config else {}
    for key in ("dgp", "n", "gammas", "replications", "methods", "seed", "grid", "baseline", "n_sim",
                "zeta", "k_folds", "basis", "hcpi_inflation", "hcpi_range_bound"):
        value = getattr(args, key)
        if value is not None:
            mapping[key] = value
    return ExperimentPlan.from_mapping(mapping)


def cmd_simulate(args) -> int:
    plan = _plan_from_args(args)
    rows, records = run_plan(plan)
    emit_outputs(rows, records, args.out, plan)
    _print_summary(rows)
    return 0


def cmd_benchmark(args) -> int:
    plans = benchmark_plans(args.reps, args.seed, args.n, args.n_sim)
    for name in (d.strip().upper() for d in args.dgps.split(",")):
        if name not in plans:
            raise ValueError(f"unknown DGP {name!r}")
        rows, records = run_plan(plans[name])
        emit_outputs(rows, records, Path(args.out) / name, plans[name])
        print(f"# {name}")
        _print_summary(rows)
    return 0


def cmd_analyze(args) -> int:
    table = load_csv(args.input, parse_schema(args.schema), args.delimiter)
    data = table.to_dataset()
    cfg = MethodConfig(
        method=args.method,
        gamma=args.gamma,
        grid=CutoffGrid(parse_range(args.grid), args.baseline_cutoff),
        split=SplitSpec(args.zeta, args.seed, args.folds),
        nuisance=NuisanceModelSpec(outcome=args.outcome_model, propensity="sample-mean"),
        critical=CriticalValueSpec(args.n_sim, args.seed),
        hcpi_range_bound=args.range_bound,
        hcpi_inflation=args.inflation,
    )
    res = run_method(data, cfg)
    report = {
        "method": args.method,
        "gamma": args.gamma,
        "n": data.n,
        "final_cutoff": res.final_cutoff,
        "changed": res.changed,
        "passed_set": [float(c) for c in res.passed_set],
    }
    if res.decision is not None:
        report["tested_cutoffs"] = res.decision.cutoffs.tolist()
        report["lower_bounds"] = res.decision.lower_bounds.tolist()
        report["critical_value"] = res.decision.critical_value
    print(json.dumps(report, indent=2))
    return 0


def cmd_oracle(args) -> int:
    oracle = TrueValueOracle(args.dgp, args.baseline)
    grid = np.asarray(parse_range(args.grid))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["cutoff", "tau"])
    for c, t in zip(grid, np.atleast_1d(oracle(grid))):
        w.writerow([fmt(c), fmt(t)])
    return 0


def _print_summary(rows):
    print(f"{'method':<12} {'gamma':>8} {'pass':>7} {'error':>7} {'EI':>9}")
    for r in rows:
        err = "" if r.error_rate is None else f"{r.error_rate:7.3f}"
        ei = "" if r.expected_improvement is None else f"{r.expected_improvement:9.4f}"
        print(f"{r.method:<12} {r.gamma:>8.4f} {r.pass_rate:>7.3f} {err:>7} {ei:>9}")


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "benchmark": cmd_benchmark, "oracle": cmd_oracle}


_VALUE_FLAGS = ("--grid", "--gammas", "--baseline", "--baseline-cutoff")


def _attach_values(argv):
    # "--grid -2:2:41" would otherwise read as an unknown option
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_attach_values(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"cspi {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
