"""centroflow run|verify|sweep --config FILE [--out DIR] [--seed N]"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import CentroflowError, ConvexityViolation, NumericError
from .lab import ExperimentConfig, experiment, sweep, write_report

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="centroflow", description="Simulate and verify p-centro-affine curvature flows.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "integrate one flow and write its trajectory"),
        ("verify", "run the configured checks on fresh trajectories"),
        ("sweep", "run a grid of experiments and write a summary CSV"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (overrides config and environment)")
        p.add_argument("--seed", type=int, default=None, help="seed for random initial bodies")
    return parser


def cmd_run(cfg: ExperimentConfig) -> int:
    out = Path(cfg.output.dir)
    summary = experiment(cfg, out, seed=cfg.body.random.seed)
    _echo(summary)
    if summary["termination"] == "convexity_failure":
        return EXIT_NUMERIC
    return EXIT_OK if summary["passed"] else EXIT_CHECK


def cmd_verify(cfg: ExperimentConfig) -> int:
    if not cfg.checks.names:
        raise ValueError("verify needs at least one check name in [checks].names")
    out = Path(cfg.output.dir)
    seeds = cfg.sweep.seeds or (cfg.body.random.seed,)
    ps = cfg.sweep.p_values or (cfg.flow.p,)
    reports, cells = [], []
    for p in ps:
        for seed in seeds:
            summary = experiment(cfg, None, seed=seed, p=p)
            cells.append({"p": p, "seed": seed, "passed": summary["passed"]})
            for c in summary["checks"]:
                c["name"] = f"{c['name']} (p={p:g}, seed={seed})"
                reports.append(c)
    summary = {
        "passed": all(c["passed"] for c in reports),
        "n_checks": len(reports),
        "n_failed": sum(not c["passed"] for c in reports),
        "checks": reports,
        "cells": cells,
    }
    write_report(out / "report.json", summary)
    for c in reports:
        if not c["passed"]:
            print(f"FAIL {c['name']}: worst margin {c['worst_margin']} (tolerance {c['tolerance']})")
    print(f"{summary['n_checks'] - summary['n_failed']}/{summary['n_checks']} checks passed")
    return EXIT_OK if summary["passed"] else EXIT_CHECK


def cmd_sweep(cfg: ExperimentConfig) -> int:
    out = Path(cfg.output.dir)
    rows = sweep(cfg, out)
    errored = [r for r in rows if r["error"]]
    failed = [r for r in rows if not r["error"] and r["n_failed"]]
    print(f"{len(rows)} cells, {len(errored)} errored, {len(failed)} with failed checks; summary in {out / 'sweep.csv'}")
    return EXIT_CHECK if errored or failed else EXIT_OK


def _echo(summary):
    print(f"termination: {summary['termination']} after {summary['steps']} steps")
    if summary.get("extinction_estimate") is not None:
        print(f"extinction estimate: {summary['extinction_estimate']!r}")
    for c in summary["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: worst margin {c['worst_margin']}")


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config).with_overrides(out=args.out, seed=args.seed)
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"centroflow: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](cfg)
    except (NumericError, ConvexityViolation) as exc:
        print(f"centroflow: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, CentroflowError) as exc:
        print(f"centroflow: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"centroflow: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
