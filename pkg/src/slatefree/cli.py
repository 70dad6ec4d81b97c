"""Command-line entry point: ``slatefree {run,solve-exact,verify,plot}``.

Failures print one JSON object to stderr (``{"error": ..., "message": ...}``)
and exit with a nonzero code.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .catalog import RandomizedPolicy
from .decomposition import (
    item_frequencies,
    item_marginals,
    property1_residual,
    verify_property3,
    verify_theorem1,
    verify_theorem2,
)
from .errors import CapacityError, ConfigError, CsvFormatError, SlateFreeError
from .exact import value_iteration
from .harness import load_config, run_experiment
from .plot import emit_plot

EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_CHECK = 3

VERIFY_TOLERANCES = {
    "theorem1": 1e-9,
    "frequency_rows": 1e-10,
    "transition_rows": 1e-10,
    "property1": 1e-12,
    "property3": 1e-12,
    "theorem2": 1e-8,
    "slate_spread": 1e-10,
}


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    result = run_experiment(cfg, args.out_dir, jobs=args.jobs)
    if args.plot:
        emit_plot(f"{args.out_dir}/episodes.csv", f"{args.out_dir}/curves.svg", cfg.smoothing_window, cfg.name)
    for notice in result.notices:
        print(f"notice: {notice}", file=sys.stderr)
    _emit({"out_dir": str(args.out_dir), "cells": len(result.cells), "notices": result.notices})
    return 0


def cmd_solve_exact(args) -> int:
    cfg = load_config(args.config)
    users = {}
    for spec in cfg.users:
        env = cfg.environment(spec)
        sol = value_iteration(env.user, env.catalog, cfg.slate_size, cfg.discount, cfg.cost_mode)
        users[spec.name] = {
            "values": [float(v) for v in sol.values],
            "mean_value": float(sol.values.mean()),
            "optimal_slates": [list(w) for w in sol.optimal_slates],
            "iterations": sol.iterations,
            "final_delta": sol.final_delta,
        }
    _emit({"k": cfg.k, "slate_size": cfg.slate_size, "discount": cfg.discount, "users": users})
    return 0


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    rng = np.random.default_rng(args.seed)
    catalog = cfg.catalog()
    worst = dict.fromkeys(VERIFY_TOLERANCES, 0.0)
    report = {}
    for spec in cfg.users:
        user = spec.build(cfg.k)
        for _ in range(args.policies):
            policy = RandomizedPolicy.random(cfg.k, cfg.slate_size, rng)
            worst["theorem1"] = max(
                worst["theorem1"], verify_theorem1(policy, user, catalog, cfg.discount, cfg.cost_mode)
            )
            freq = item_frequencies(policy)
            worst["frequency_rows"] = max(
                worst["frequency_rows"], float(np.max(np.abs(freq.sum(axis=1) - cfg.slate_size)))
            )
            marg = item_marginals(policy, user, catalog, cfg.cost_mode)
            rows = marg.item_transitions[marg.defined_mask].sum(axis=1)
            worst["transition_rows"] = max(worst["transition_rows"], float(np.max(np.abs(rows - 1.0))))
            for s, j in zip(*np.nonzero(marg.defined_mask)):
                worst["property1"] = max(worst["property1"], property1_residual(policy, user, int(s), int(j)))
                worst["property3"] = max(worst["property3"], verify_property3(policy, user, int(s), int(j)))
        t2 = verify_theorem2(user, catalog, cfg.slate_size, cfg.discount, cfg.cost_mode)
        worst["theorem2"] = max(worst["theorem2"], t2.residual)
        worst["slate_spread"] = max(worst["slate_spread"], t2.slate_spread)
        report[spec.name] = {
            "theorem2_residual": t2.residual,
            "greedy_matches_optimum": t2.all_match,
            "unique_optimum": all(t2.unique_optimum),
        }
    greedy_ok = all(r["greedy_matches_optimum"] for r in report.values())
    passed = greedy_ok and all(worst[k] <= tol for k, tol in VERIFY_TOLERANCES.items())
    _emit({"passed": passed, "max_residuals": worst, "tolerances": VERIFY_TOLERANCES, "users": report})
    return 0 if passed else EXIT_CHECK


def cmd_plot(args) -> int:
    path = emit_plot(args.csv, args.out, args.window, args.title or "")
    _emit({"svg": str(path)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slatefree", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment and write episodes.csv + summary.json")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--plot", action="store_true", help="also write curves.svg")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("solve-exact", help="value iteration over all slates for each user")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_solve_exact)

    p = sub.add_parser("verify", help="numeric checks of the per-item decomposition")
    p.add_argument("--config", required=True)
    p.add_argument("--policies", type=int, default=20, help="random policies per user")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot", help="learning curves from an episodes CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=200)
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)
    return parser


def _fail(exc: Exception, code: int) -> int:
    record = {"error": type(exc).__name__, "message": str(exc)}
    line = getattr(exc, "line", None)
    if line is not None:
        record["line"] = line
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, CapacityError, CsvFormatError) as exc:
        return _fail(exc, EXIT_CONFIG)
    except (SlateFreeError, OSError, ValueError) as exc:
        return _fail(exc, EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())
