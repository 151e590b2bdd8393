#!/usr/bin/env python3
"""Randomized adversarial scenarios under the safety and agreement observer.

    python scripts/safety_suite.py --scenarios 1000
"""

import argparse
import time
from collections import Counter

from bridgeless.harness.scenario import run_scenario
from bridgeless.harness.suites import random_scenario, selftest_cases


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scenarios", type=int, default=1000)
    ap.add_argument("--first-seed", type=int, default=0)
    args = ap.parse_args()

    for case in selftest_cases():
        kinds = sorted({v.kind for v in case.result.violations}) or ["none"]
        print(f"{'pass' if case.passed else 'FAIL'}  {case.name}: {', '.join(kinds)}")

    t0 = time.perf_counter()
    outcomes, violations, boundaries = Counter(), Counter(), 0
    flagged = []
    for seed in range(args.first_seed, args.first_seed + args.scenarios):
        res = run_scenario(random_scenario(seed))
        outcomes.update(o.kind.value for o in res.outcomes)
        violations.update(v.kind for v in res.violations)
        boundaries += res.boundaries_checked
        if res.violations:
            flagged.append(seed)
    print(f"{args.scenarios} scenarios in {time.perf_counter() - t0:.1f}s, {boundaries} boundaries checked")
    print("session outcomes:", dict(sorted(outcomes.items())))
    print("violations:", dict(violations) or "none")
    if flagged:
        print("scenario seeds with violations:", flagged[:20])
    return 1 if flagged else 0


if __name__ == "__main__":
    raise SystemExit(main())
