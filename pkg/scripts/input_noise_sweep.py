"""Final active-learning error as the exploration-noise variance changes.

After the warm-up epoch the inputs are the designed sinusoids plus white
noise of variance sigma_u2 (default gamma2 / (2p)). Setting it to zero
spends the whole budget on the design.
"""
import argparse

import numpy as np

from activeid.active import ActiveConfig, run_active
from activeid.bench.systems import SystemSpec, gen_system
from activeid.lds import NoiseModel
from activeid.rng import derive_seed


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=float, nargs="+", default=[0.0, 0.25, 0.5, 1.0, 2.0])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--epochs", type=int, default=4)
    ap.add_argument("--gamma2", type=float, default=4.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sys_true = gen_system(SystemSpec("jordan", d=4, rho=0.9))
    print(f"{'sigma_u2':>9} {'median':>10} {'p10':>10} {'p90':>10}")
    for level in args.levels:
        if level >= args.gamma2:
            continue
        cfg = ActiveConfig(gamma2=args.gamma2, epochs=args.epochs, sigma_u2=level)
        errs = [run_active(sys_true, NoiseModel(1.0), cfg,
                           seed=derive_seed(args.seed, "trial", t)).final_error
                for t in range(args.trials)]
        p10, med, p90 = np.percentile(errs, [10, 50, 90])
        print(f"{level:9.3g} {med:10.4g} {p10:10.4g} {p90:10.4g}")


if __name__ == "__main__":
    main()
