"""Run an experiment config and print the median error per checkpoint.

Usage: python scripts/run_config.py scripts/configs/jordan.toml --out results/jordan
"""
import argparse
from pathlib import Path

import tomli

from activeid.bench.experiment import ExperimentConfig, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--out", default=None)
    ap.add_argument("--trials", type=int, help="override the trial count")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    with open(args.config, "rb") as fh:
        cfg = ExperimentConfig.from_dict(tomli.load(fh))
    if args.trials:
        cfg.trials = args.trials
    cfg.threads = args.threads
    out = Path(args.out or Path("results") / Path(args.config).stem)
    rep = run_experiment(cfg, out_dir=out)

    Ts = sorted({c.T for pts in rep.series.values() for c in pts})
    print("T".rjust(8) + "".join(p.rjust(14) for p in rep.series))
    for T in Ts:
        row = [next((c.median for c in pts if c.T == T), float("nan")) for pts in rep.series.values()]
        print(f"{T:8d}" + "".join(f"{v:14.4g}" for v in row))
    for f in rep.failed:
        print("failed:", f)
    print(f"outputs in {out}")


if __name__ == "__main__":
    main()
