#!/usr/bin/env python3
"""Randomized property run of the needle lemma chain: unique maximum, decay
away from the maximum, the mass-ratio bound, and the ball-mass bound, over
random weakly concave arc densities.

Usage:
    python scripts/needle_property_suite.py [--trials 10000] [--out suite.json]
"""

import argparse
import json

from waistlab.needles import needle_suite


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--trials", type=lambda s: int(float(s)), default=10_000)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--n-max", type=int, default=8)
    parser.add_argument("--out", default=None)
    args = parser.parse_args()

    reports = needle_suite(args.trials, args.seed, n_range=(2, args.n_max))
    payload = json.dumps(reports, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload + "\n")
    print(payload)
    total = sum(r["violations"] for r in reports)
    print(f"{'PASS' if total == 0 else 'FAIL'}: {total} violations over "
          f"{args.trials} needles")
    raise SystemExit(0 if total == 0 else 1)


if __name__ == "__main__":
    main()
