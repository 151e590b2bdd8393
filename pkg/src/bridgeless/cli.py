"""Command-line entry point: ``bridgeless {run,liveness-curve,formula,selftest}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from .harness.formula import DomainError, pliveness_formula
from .harness.montecarlo import monte_carlo_liveness
from .harness.scenario import ConfigError, load_scenario, run_scenario
from .harness.suites import random_scenario, selftest_cases


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_scenario(args.scenario)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    result = run_scenario(cfg)
    if args.events:
        Path(args.events).write_text(result.events)
    if args.outcomes:
        Path(args.outcomes).write_text(json.dumps([o.record() for o in result.outcomes], indent=2) + "\n")
    for o in result.outcomes:
        dep = o.deposit_id.canonical() if o.deposit_id else "-"
        print(f"session {o.sid}: proposer={o.proposer} outcome={o.kind.value} deposit={dep}")
    for v in result.violations:
        print(f"VIOLATION {v}")
    print(f"{len(result.violations)} violation(s), {result.boundaries_checked} session boundaries checked")
    return 1 if result.violations else 0


def _cmd_curve(args: argparse.Namespace) -> int:
    try:
        points = monte_carlo_liveness(args.n, args.t, args.trials, args.max_sessions, args.seed, args.workers)
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    rows = [(p.r, p.analytic, p.empirical, p.ci_half_width) for p in points]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "analytic", "empirical", "ci"])
            for r, a, e, c in rows:
                w.writerow([r, f"{a:.6f}", f"{e:.6f}", f"{c:.6f}"])
    print(f"{'r':>3} {'analytic':>9} {'empirical':>9} {'ci':>8}  ok")
    for p in points:
        print(f"{p.r:>3} {p.analytic:>9.4f} {p.empirical:>9.4f} {p.ci_half_width:>8.4f}  {'yes' if p.within() else 'NO'}")
    if args.check and not all(p.within() for p in points):
        return 3
    return 0


def _cmd_formula(args: argparse.Namespace) -> int:
    try:
        print(f"{pliveness_formula(args.n, args.t, args.r):.6f}")
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def _cmd_selftest(args: argparse.Namespace) -> int:
    failed = 0
    for case in selftest_cases(args.seed):
        status = "pass" if case.passed else "FAIL"
        failed += not case.passed
        print(f"{status}  {case.name} ({len(case.result.violations)} violation(s), expected "
              f"{'some' if case.expect_violation else 'none'})")
    bad = []
    for i in range(args.scenarios):
        res = run_scenario(random_scenario(args.seed * 1_000_003 + i))
        if res.violations:
            bad.append((i, res.violations))
    print(f"{'pass' if not bad else 'FAIL'}  random adversarial scenarios: {len(bad)}/{args.scenarios} with violations")
    for i, vs in bad[:5]:
        for v in vs:
            print(f"  scenario {i}: {v}")
    return 1 if failed or bad else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bridgeless", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("scenario")
    p.add_argument("--events", help="write the event log here")
    p.add_argument("--outcomes", help="write per-session outcomes (JSON) here")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("liveness-curve", help="Monte Carlo liveness curve vs the closed form")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--max-sessions", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV output path (columns r, analytic, empirical, ci)")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--check", action="store_true", help="exit 3 if any point misses the tolerance")
    p.set_defaults(func=_cmd_curve)

    p = sub.add_parser("formula", help="closed-form finalization probability")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.set_defaults(func=_cmd_formula)

    p = sub.add_parser("selftest", help="observer suites")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--scenarios", type=int, default=100)
    p.set_defaults(func=_cmd_selftest)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
