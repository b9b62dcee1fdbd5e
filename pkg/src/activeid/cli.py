"""Command-line entry point.

Every subcommand reads an optional TOML config (``--config``) whose
``seed`` can be overridden with ``--seed``; outputs go to ``--out``.
Exit status: 0 success, 1 failed verification, 2 bad configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import tomli

from .active import ActiveConfig, run_active, run_noise_baseline, run_oracle
from .bench.experiment import ExperimentConfig, Report, rows_to_csv, run_experiment
from .bench.plot import emit_plot
from .bench.systems import SystemSpec, gen_system
from .bench.verify import LEVELS, VerifyConfig, verify_suite
from .design import DesignProblem, opt_input, optimal_noise_cov
from .errors import ActiveIDError, ConfigError
from .freq import PeriodicInput
from .lds import LinSys, NoiseModel, gram_noise, simulate

log = logging.getLogger("activeid")


def _load(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _seed(args, cfg) -> int:
    if args.seed is not None:
        return args.seed
    return int(cfg.get("seed", 0))


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _table(cfg, name, allowed) -> dict:
    tab = dict(cfg.get(name, {}))
    extra = set(tab) - set(allowed)
    if extra:
        raise ConfigError(f"unknown [{name}] keys: {sorted(extra)}")
    return tab


def _system(cfg, seed) -> LinSys:
    if "system" not in cfg:
        raise ConfigError("config needs a [system] table")
    return gen_system(SystemSpec.from_dict(cfg["system"]), seed=seed)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fmt_row(values):
    return ",".join(repr(float(v)) for v in values)


def cmd_simulate(args, cfg):
    seed = _seed(args, cfg)
    sys_ = _system(cfg, seed)
    tab = _table(cfg, "simulate", ("T", "sigma", "sigma_u", "input"))
    T = int(tab.get("T", 1000))
    noise = NoiseModel(float(tab.get("sigma", 1.0)), float(tab.get("sigma_u", 1.0)))
    signal = None
    if "input" in tab:
        signal = PeriodicInput.from_json(Path(tab["input"]).read_text())
    traj = simulate(sys_, noise, signal, T, seed=seed)
    d, p = sys_.d, sys_.p
    lines = ["# schema=1", ",".join(["t"] + [f"x{i}" for i in range(d)] + [f"u{j}" for j in range(p)])]
    for t in range(T + 1):
        u = traj.inputs[t] if t < T else np.full(p, np.nan)
        lines.append(f"{t}," + _fmt_row(np.concatenate([traj.states[t], u])))
    path = _out(args) / "trajectory.csv"
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path}")
    return 0


def _problem_from_config(cfg, seed) -> DesignProblem:
    sys_ = _system(cfg, seed)
    tab = _table(cfg, "design", ("k", "gamma2", "sigma2", "horizon", "horizon_weight"))
    k = int(tab.get("k", 20))
    past = float(tab.get("sigma2", 0.0)) * float(tab.get("horizon", 1.0)) * gram_noise(sys_.A, k)
    return DesignProblem(sys_.A, sys_.B, float(tab.get("gamma2", sys_.p)), k, past,
                         horizon_weight=float(tab.get("horizon_weight", 1.0)))


def cmd_design(args, cfg):
    seed = _seed(args, cfg)
    if args.problem is not None:
        try:
            problem = DesignProblem.from_json(Path(args.problem).read_text())
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed design problem: {exc}") from None
    else:
        problem = _problem_from_config(cfg, seed)
    res = opt_input(problem, seed=seed)
    out = _out(args)
    _write_json(out / "design.json", res.to_json())
    u = res.input.to_time_domain()
    lines = ["# schema=1", ",".join(["t"] + [f"u{j}" for j in range(u.shape[0])])]
    lines += [f"{t}," + _fmt_row(u[:, t]) for t in range(u.shape[1])]
    (out / "input.csv").write_text("\n".join(lines) + "\n")
    print(f"objective {res.objective:.6g} (upper bound {res.upper_bound:.6g})")
    return 0


def _single_run(args, cfg, policies):
    seed = _seed(args, cfg)
    econf = ExperimentConfig.from_dict({**cfg, "seed": seed})
    sys_ = gen_system(econf.system, seed=seed)
    acfg: ActiveConfig = econf.active_config(sys_.p)
    noise = NoiseModel(econf.sigma, 0.0)
    policy = args.policy or policies[0]
    if policy not in policies:
        raise ConfigError(f"policy must be one of {policies}")
    if policy == "active":
        rec = run_active(sys_, noise, acfg, seed=seed)
    elif policy == "oracle":
        rec = run_oracle(sys_, noise, acfg, seed=seed)
    else:
        cov = (np.eye(sys_.p) * acfg.gamma2 / sys_.p if policy == "iso_noise"
               else optimal_noise_cov(sys_.A, sys_.B, acfg.gamma2, econf.sigma**2).cov)
        rec = run_noise_baseline(sys_, noise, cov, acfg, seed=seed, policy=policy)
    out = _out(args)
    (out / f"{policy}.csv").write_text(rows_to_csv(rec.csv_rows(0)))
    _write_json(out / f"{policy}.json", rec.to_json())
    print(f"{policy}: final spectral error {rec.final_error:.6g}")
    return 0


def cmd_run_active(args, cfg):
    return _single_run(args, cfg, ("active", "oracle"))


def cmd_run_baseline(args, cfg):
    return _single_run(args, cfg, ("iso_noise", "opt_noise"))


def cmd_experiment(args, cfg):
    seed = _seed(args, cfg)
    econf = ExperimentConfig.from_dict({**cfg, "seed": seed})
    if args.threads is not None:
        econf.threads = args.threads
    report = run_experiment(econf, out_dir=_out(args))
    for pol, pts in report.series.items():
        if pts:
            print(f"{pol}: median error {pts[-1].median:.4g} at T={pts[-1].T}")
    for trial, pol, msg in report.failed:
        print(f"failed: trial {trial} policy {pol}: {msg}", file=sys.stderr)
    return 0


def cmd_verify(args, cfg):
    seed = _seed(args, cfg)
    vconf = VerifyConfig.from_dict(cfg.get("verify", {}))

    def show(c):
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: measured {c.measured:.4g} "
              f"threshold {c.threshold:.4g} ({c.seconds:.1f}s) {c.detail}", flush=True)

    report = verify_suite(args.level, seed=seed, config=vconf, progress=show)
    if args.out is not None:
        (_out(args) / "verify.csv").write_text(report.to_csv())
    return 0 if report.passed else 1


def cmd_plot(args, cfg):
    if args.report is None:
        raise ConfigError("plot needs --report")
    try:
        report = Report.from_json(Path(args.report).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report: {exc}") from None
    path = emit_plot(report, _out(args) / "errors.svg")
    print(f"wrote {path}")
    return 0


COMMANDS = {
    "simulate": (cmd_simulate, "simulate a trajectory of the configured system"),
    "design": (cmd_design, "solve an input design problem"),
    "run-active": (cmd_run_active, "one active (or oracle) identification run"),
    "run-baseline": (cmd_run_baseline, "one noise-driven baseline run"),
    "experiment": (cmd_experiment, "policies x trials with CSV, report and plot"),
    "verify": (cmd_verify, "numerical verification suite"),
    "plot": (cmd_plot, "render a report as SVG"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="activeid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="TOML config file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", default=None if name == "verify" else ".",
                        help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "experiment":
            sp.add_argument("--threads", type=int, help="trial-level worker threads")
        if name == "verify":
            sp.add_argument("--level", choices=LEVELS, default="fast")
        if name == "design":
            sp.add_argument("--problem", help="design problem JSON (overrides the config)")
        if name in ("run-active", "run-baseline"):
            sp.add_argument("--policy", help="which policy to run")
        if name == "plot":
            sp.add_argument("--report", help="report JSON written by `experiment`")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    fn = COMMANDS[args.command][0]
    try:
        return fn(args, _load(args.config))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ActiveIDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
