#!/usr/bin/env python3
"""Print the constant schedules and chain contraction bounds for chosen alphas.

Example:
    python scripts/tabulate_constants.py --alphas 0.5 1 2
"""
import argparse
import sys

import numpy as np

from sloc.polchinski import lsi_schedule, stability_factor
from sloc.rgd import lsi_lower_bound


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--alphas", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    parser.add_argument("--taus", type=float, nargs="+", default=list(np.linspace(0.1, 0.9, 9)))
    parser.add_argument("--etas", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0])
    args = parser.parse_args()

    for alpha in args.alphas:
        schedule = lsi_schedule(alpha)
        print(f"alpha = {alpha}")
        print(f"  {'tau':>6} {'lam':>10} {'big_lam':>10} {'gamma':>10} {'factor':>10}")
        for tau in args.taus:
            print(
                f"  {tau:6.3f} {float(schedule.lam(tau)):10.5f} "
                f"{float(schedule.big_lam(tau)):10.5f} {float(schedule.gamma(tau)):10.5f} "
                f"{stability_factor(alpha, tau):10.5f}"
            )
        print(f"  gamma(1) = {float(schedule.gamma(1.0)):.12f} (equals alpha)")
        print(f"  {'eta':>6} {'C_LS lower bound':>18} {'per-step KL factor':>20}")
        for eta in args.etas:
            print(
                f"  {eta:6.3f} {lsi_lower_bound(alpha, eta):18.6f} "
                f"{1.0 / (1.0 + alpha * eta) ** 2:20.6f}"
            )
        print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
