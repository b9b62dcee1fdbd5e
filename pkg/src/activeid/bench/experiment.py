"""Experiment orchestration: policies x trials, raw CSV and aggregated report."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .. import __version__
from ..active import CSV_FIELDS, ActiveConfig, run_active, run_noise_baseline, run_oracle
from ..design import optimal_noise_cov
from ..errors import ConfigError
from ..lds import NoiseModel
from ..rng import derive_seed
from .systems import SystemSpec, gen_system

log = logging.getLogger(__name__)

POLICIES = ("active", "oracle", "iso_noise", "opt_noise")
SCHEMA_LINE = "# schema=1"


@dataclass
class ExperimentConfig:
    system: SystemSpec
    policies: tuple = ("active", "iso_noise")
    trials: int = 50
    epochs: int = 6
    delta: float = 0.1
    gamma2: float | None = None  # default: p
    sigma: float = 1.0
    seed: int = 0
    T0: int = 100
    k0: int = 20
    k_cap: int | None = 1280
    mode: str = "greedy"
    sigma_u2: float | None = None
    estimate_B: bool = False
    opt_max_iters: int = 300
    threads: int = 1
    csv_name: str = "runs.csv"
    report_name: str = "report.json"
    plot_name: str | None = "errors.svg"

    def __post_init__(self):
        if isinstance(self.system, dict):
            self.system = SystemSpec.from_dict(self.system)
        self.policies = tuple(self.policies)
        if not self.policies:
            raise ConfigError("at least one policy is required")
        bad = [p for p in self.policies if p not in POLICIES]
        if bad:
            raise ConfigError(f"unknown policies {bad}; expected a subset of {POLICIES}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        """Build from a parsed TOML document: a ``[system]`` table, an
        ``[experiment]`` table of the remaining fields and an optional
        top-level ``seed``."""
        obj = dict(obj)
        if "system" not in obj:
            raise ConfigError("config needs a [system] table")
        kw = dict(obj.get("experiment", {}))
        if "seed" in obj:
            kw.setdefault("seed", obj["seed"])
        out = dict(obj.get("output", {}))
        for src, dst in (("csv", "csv_name"), ("report", "report_name"), ("plot", "plot_name")):
            if src in out:
                kw[dst] = out.pop(src)
        if out:
            raise ConfigError(f"unknown output keys: {sorted(out)}")
        known = {f.name for f in fields(cls)} - {"system"}
        extra = set(kw) - known
        if extra:
            raise ConfigError(f"unknown experiment keys: {sorted(extra)}")
        try:
            return cls(system=SystemSpec.from_dict(obj["system"]), **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["system"] = self.system.to_dict()
        out["policies"] = list(self.policies)
        return out

    def config_hash(self) -> str:
        """sha256 of the canonical config, excluding execution-only settings."""
        d = self.to_dict()
        d.pop("threads")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def active_config(self, p: int) -> ActiveConfig:
        return ActiveConfig(
            T0=self.T0, k0=self.k0, delta=self.delta,
            gamma2=float(p) if self.gamma2 is None else self.gamma2,
            mode=self.mode, sigma_u2=self.sigma_u2, epochs=self.epochs, k_cap=self.k_cap,
            estimate_B=self.estimate_B, opt_max_iters=self.opt_max_iters,
        )


@dataclass
class Checkpoint:
    epoch: int
    T: int
    median: float
    p10: float
    p90: float
    n: int


@dataclass
class Report:
    series: dict = field(default_factory=dict)  # policy -> list[Checkpoint]
    config_hash: str = ""
    version: str = ""
    wall_time: float = 0.0
    failed: list = field(default_factory=list)  # (trial, policy, message)

    def is_empty(self) -> bool:
        return not any(self.series.values())

    def to_json(self) -> dict:
        return {
            "series": {k: [asdict(c) for c in v] for k, v in sorted(self.series.items())},
            "config_hash": self.config_hash,
            "version": self.version,
            "wall_time": self.wall_time,
            "failed": [list(f) for f in self.failed],
        }

    @classmethod
    def from_json(cls, obj) -> "Report":
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            series = {k: [Checkpoint(**c) for c in v] for k, v in obj.get("series", {}).items()}
        except TypeError as exc:
            raise ConfigError(f"malformed report: {exc}") from None
        return cls(series=series, config_hash=obj.get("config_hash", ""),
                   version=obj.get("version", ""), wall_time=obj.get("wall_time", 0.0),
                   failed=[tuple(f) for f in obj.get("failed", [])])


def version_string() -> str:
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                              text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        tag = desc.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        tag = ""
    return f"{__version__}+g{tag}" if tag else __version__


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != SCHEMA_LINE:
            raise ConfigError(f"{path}: expected '{SCHEMA_LINE}' header, got {first!r}")
        return list(csv.DictReader(fh))


def _run_one(policy, sys_true, noise, acfg, trial_seed, noise_cov):
    if policy == "active":
        return run_active(sys_true, noise, acfg, seed=trial_seed)
    if policy == "oracle":
        return run_oracle(sys_true, noise, acfg, seed=trial_seed)
    cov = noise_cov[policy]
    return run_noise_baseline(sys_true, noise, cov, acfg, seed=trial_seed, policy=policy)


def run_policies(config: ExperimentConfig):
    """All (trial, policy) runs; returns (sorted rows, failures)."""
    sys_true = gen_system(config.system, seed=config.seed)
    p = sys_true.p
    acfg = config.active_config(p)
    noise = NoiseModel(config.sigma, 0.0)
    noise_cov = {"iso_noise": np.eye(p) * acfg.gamma2 / p}
    if "opt_noise" in config.policies:
        noise_cov["opt_noise"] = optimal_noise_cov(sys_true.A, sys_true.B, acfg.gamma2,
                                                   config.sigma**2).cov
    jobs = [(t, pol) for t in range(config.trials) for pol in config.policies]

    def work(job):
        trial, policy = job
        trial_seed = derive_seed(config.seed, "trial", trial)
        try:
            rec = _run_one(policy, sys_true, noise, acfg, trial_seed, noise_cov)
            return rec.csv_rows(trial), None
        except Exception as exc:  # a failed trial must not abort the batch
            log.warning("trial %d policy %s failed: %s", trial, policy, exc)
            return [], (trial, policy, f"{type(exc).__name__}: {exc}")

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    rows = sorted((r for rs, _ in results for r in rs), key=lambda r: (r[1], r[0], r[2]))
    failed = sorted(f for _, f in results if f is not None)
    return rows, failed


def aggregate(rows, policies) -> dict:
    series = {}
    for pol in policies:
        by_epoch = {}
        for r in rows:
            if r[1] == pol:
                by_epoch.setdefault((r[2], r[3]), []).append(r[6])
        pts = []
        for (epoch, T), errs in sorted(by_epoch.items()):
            e = np.asarray(errs, dtype=float)
            lo, med, hi = np.percentile(e, [10, 50, 90])
            pts.append(Checkpoint(epoch=int(epoch), T=int(T), median=float(med), p10=float(lo),
                                  p90=float(hi), n=len(e)))
        series[pol] = pts
    return series


def run_experiment(config: ExperimentConfig, out_dir=None) -> Report:
    """Run every policy on every trial with paired seeds, write the raw CSV,
    the aggregated report and (optionally) the SVG plot into ``out_dir``."""
    t0 = time.perf_counter()
    rows, failed = run_policies(config)
    report = Report(series=aggregate(rows, config.policies), config_hash=config.config_hash(),
                    version=version_string(), failed=failed)
    report.wall_time = time.perf_counter() - t0
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / config.csv_name).write_text(rows_to_csv(rows))
        (out / config.report_name).write_text(json.dumps(report.to_json(), indent=2) + "\n")
        if config.plot_name and not report.is_empty():
            from .plot import emit_plot

            emit_plot(report, out / config.plot_name)
    return report
