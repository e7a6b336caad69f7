#!/usr/bin/env python3
"""Run the full cross-construction verification battery from the command line.

Example:
    python scripts/run_equivalences.py --paths 4000 --dt 0.002 --seed 7
"""
import argparse
import sys
import time

from sloc import suites


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--paths", type=int, default=10_000)
    parser.add_argument("--dt", type=float, default=1e-3)
    parser.add_argument("--particles", type=int, default=1_000)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument(
        "--suites",
        nargs="+",
        default=["equiv", "bridge", "rgd", "lsi"],
        choices=sorted(suites.SUITES),
    )
    args = parser.parse_args()

    budget = suites.SuiteBudget(
        seed=args.seed,
        paths=args.paths,
        dt=args.dt,
        particles=args.particles,
        workers=args.workers,
    )
    all_pass = True
    for name in args.suites:
        t0 = time.time()
        report = suites.SUITES[name](budget)
        for check in report.checks:
            flag = "PASS" if check.passed else "FAIL"
            print(
                f"{flag} {check.name}: observed={check.observed:.6g} "
                f"tolerance={check.tolerance:.6g} ({check.runtime:.2f}s)"
            )
            if check.detail:
                print(f"      {check.detail}")
        print(f"== suite {name}: {'PASS' if report.global_pass else 'FAIL'} "
              f"in {time.time() - t0:.1f}s\n")
        all_pass = all_pass and report.global_pass
    return 0 if all_pass else 1


if __name__ == "__main__":
    sys.exit(main())
