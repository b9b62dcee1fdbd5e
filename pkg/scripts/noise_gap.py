"""Periodic-input vs optimal-noise objective for A = (1 - 1/d) I, B = I.

The best periodic input concentrates power near DC where every mode is
slow; white noise of any covariance spreads power over all frequencies, so
the ratio should grow roughly linearly in d.
"""
import argparse

import numpy as np

from activeid.design import lower_bound_rate, optimal_noise_cov


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, nargs="+", default=[2, 4, 8, 16])
    ap.add_argument("--period", type=int, default=256)
    ap.add_argument("--gamma2", type=float, default=1.0)
    args = ap.parse_args()

    print(f"{'d':>4} {'periodic':>12} {'noise':>12} {'ratio':>8} {'ratio/d':>8}")
    for d in args.dims:
        A = (1 - 1 / d) * np.eye(d)
        per = lower_bound_rate(A, np.eye(d), 0.0, args.gamma2, k=args.period)
        noi = optimal_noise_cov(A, np.eye(d), args.gamma2, 0.0, gap_tol=1e-4).objective
        print(f"{d:4d} {per:12.5g} {noi:12.5g} {per / noi:8.3f} {per / noi / d:8.3f}")


if __name__ == "__main__":
    main()
