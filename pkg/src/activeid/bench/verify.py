"""Numerical verification suite: each check reports a measured value against
its threshold and a pass/fail verdict."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..active import ActiveConfig, run_active, run_noise_baseline, run_oracle
from ..design import (
    DesignProblem,
    diagonal_noise_closed_form,
    hk_directional_derivative,
    hk_quadratic,
    lower_bound_rate,
    opt_input,
    optimal_noise_cov,
    single_frequency_optimum,
)
from ..errors import ConfigError
from ..freq import (
    PeriodicInput,
    gamma_k_u,
    gamma_k_u_time_oracle,
    gamma_k_u_tilde,
    settle_time,
)
from ..lds import LinSys, NoiseModel, gram_noise, simulate_batch, truncation_horizon
from ..rng import derive_seed, stream
from .systems import SystemSpec, gen_system

LEVELS = ("fast", "full")


@dataclass
class VerifyConfig:
    """Sizes and tolerances of every check (full-level values)."""

    oracle_systems: int = 50
    oracle_rel_tol: float = 1e-6
    parseval_inputs: int = 50
    parseval_rel_tol: float = 1e-10
    scalar_abs_tol: float = 1e-6
    noise_spectra: int = 10
    noise_rel_tol: float = 0.01
    noise_gap_tol: float = 1e-4  # solver duality gap, relative to gamma2
    gap_dim: int = 8
    gap_period: int = 256
    gap_min_factor: float = 0.5  # ratio must be >= factor * d
    tail_trials: int = 2000
    rate_trials: int = 200
    rate_rel_tol: float = 0.2
    loop_trials: int = 50
    loop_epochs: int = 6
    loop_iso_ratio: float = 0.5
    loop_oracle_ratio: float = 2.0
    budget_trials: int = 50
    budget_epochs: int = 3
    grad_instances: int = 20
    grad_rel_tol: float = 1e-4
    shrink: int = 10  # trial counts divided by this at the fast level

    @classmethod
    def from_dict(cls, obj: dict) -> "VerifyConfig":
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown verify keys: {sorted(extra)}")
        return cls(**obj)


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0


@dataclass
class VerifyReport:
    level: str
    seed: int
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_csv(self) -> str:
        """Machine-readable results (timings omitted so reruns are identical)."""
        buf = io.StringIO()
        buf.write("# schema=1\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "passed", "measured", "threshold", "detail"])
        for c in self.checks:
            w.writerow([c.name, int(c.passed), repr(float(c.measured)), repr(float(c.threshold)),
                        c.detail])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"level": self.level, "seed": self.seed, "passed": self.passed,
                "checks": [asdict(c) for c in self.checks]}


# ---------------------------------------------------------------------------
# individual checks; each returns (passed, measured, threshold, detail)


def _random_system(rng, d, p, rho):
    G = rng.standard_normal((d, d))
    r = max(abs(np.linalg.eigvals(G)))
    return G * (rho / r), rng.standard_normal((d, p))


def check_parseval(n, tol, seed):
    rng = stream(seed, "parseval")
    worst = 0.0
    for _ in range(n):
        p, k = int(rng.integers(1, 4)), int(rng.integers(2, 65))
        u = rng.standard_normal((p, k))
        from ..freq import from_time_domain

        inp = from_time_domain(u)
        err = abs(inp.energy() / k**2 - np.sum(u**2) / k) / (np.sum(u**2) / k)
        back = np.max(np.abs(inp.to_time_domain() - u)) / np.max(np.abs(u))
        worst = max(worst, err, back)
    return worst < tol, worst, tol, f"{n} random inputs"


def check_oracle(n, tol, seed):
    rng = stream(seed, "oracle")
    worst = 0.0
    for _ in range(n):
        d, p = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        k = int(rng.integers(2, 65))
        A, B = _random_system(rng, d, p, float(rng.uniform(0.05, 0.9)))
        inp = PeriodicInput.random(p, k, rng, power=1.0)
        freq = gamma_k_u(A, B, inp)
        warm = math.ceil(truncation_horizon(A, 1e-16) / k) + 1
        time_ = gamma_k_u_time_oracle(A, B, inp, warm)
        worst = max(worst, np.linalg.norm(freq - time_) / np.linalg.norm(freq))
    return worst < tol, worst, tol, f"{n} random stable systems"


def check_scalar_design(tol, seed):
    prob = DesignProblem(np.array([[0.9]]), np.array([[1.0]]), 1.0, 20, np.zeros((1, 1)))
    res = opt_input(prob, seed=seed)
    brute = single_frequency_optimum(prob)
    gap = abs(res.objective - brute)
    return gap < tol, gap, tol, f"objective {res.objective:.9f}, brute force {brute:.9f}"


def check_noise_closed_form(n, tol, seed, gap_tol=1e-4):
    rng = stream(seed, "noise_closed_form")
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 6))
        lam = rng.uniform(-0.95, 0.95, d)
        A = np.diag(lam)
        K = truncation_horizon(A)
        res = optimal_noise_cov(A, np.eye(d), 1.0, 0.0, K, gap_tol=gap_tol)
        ref = diagonal_noise_closed_form(lam, 1.0, K)
        worst = max(worst, abs(res.objective - ref) / ref)
    return worst <= tol, worst, tol, f"{n} diagonal spectra"


def check_noise_gap(d, k, factor, seed):
    A = (1 - 1 / d) * np.eye(d)
    periodic = lower_bound_rate(A, np.eye(d), 0.0, 1.0, k=k, seed=seed)
    noise = optimal_noise_cov(A, np.eye(d), 1.0, 0.0).objective
    ratio = periodic / noise
    return ratio >= factor * d, ratio, factor * d, f"periodic {periodic:.4g} vs noise {noise:.4g}"


TAIL_CASES = (
    ("scalar", np.array([[0.5]]), np.array([[1.0]]), 100),
    ("scalar", np.array([[0.5]]), np.array([[1.0]]), 200),
    ("d2", np.array([[0.5, 0.3], [0.0, 0.4]]), np.eye(2), 200),
)


def tail_frequency(A, B, periods, trials, rng, k=10):
    """Monte-Carlo frequency of the small-covariates event and its bound."""
    p = B.shape[1]
    amps = np.zeros(p)
    amps[0] = math.sqrt(2)
    inp = PeriodicInput.sinusoid(amps, 1, k, gamma2=1.0)
    gt = gamma_k_u_tilde(A, B, inp)
    lam, V = np.linalg.eigh(gt)
    w = V[:, -1] if lam[0] <= 1e-12 * lam[-1] else V[:, 0]
    wgw = float(w @ gt @ w)
    st = settle_time(A, B, inp, w=w, zeta=wgw / 10)
    T = periods * k
    horizon = st.t_ss + T
    u = inp.to_time_domain()[:, np.arange(horizon) % k].T
    X = simulate_batch(LinSys(A, B), 1.0, horizon, trials, rng, inputs=u)
    y = X[:, st.t_ss + 1: st.t_ss + T + 1] @ w
    S = np.sum(y**2, axis=1)
    freq = float(np.mean(S <= (2 / 81) * k * periods * wgw))
    bound = math.exp(-(2 / 81) * periods)
    return freq, bound


def check_tail(trials, seed):
    worst_margin = -math.inf
    details = []
    ok = True
    for i, (name, A, B, periods) in enumerate(TAIL_CASES):
        freq, bound = tail_frequency(A, B, periods, trials, stream(seed, "tail", i))
        limit = bound + 3 * math.sqrt(bound * (1 - bound) / trials)
        ok &= freq <= limit
        worst_margin = max(worst_margin, freq - limit)
        details.append(f"{name}/{periods}: {freq:.4f} <= {limit:.4f}")
    return ok, worst_margin, 0.0, "; ".join(details)


RATE_A = np.array([[0.5, 0.3], [0.0, 0.4]])
RATE_HORIZONS = (2**9, 2**11, 2**13)


def batch_errors(A, B, u, T, trials, rng, sigma=1.0):
    """Spectral errors of least squares over ``trials`` independent runs."""
    X = simulate_batch(LinSys(A, B), sigma, T, trials, rng, inputs=u[:T])
    R, N = X[:, :-1], X[:, 1:] - (u[:T] @ B.T)[None]
    cov = np.einsum("ntd,nte->nde", R, R)
    cross = np.einsum("ntd,nte->nde", N, R)
    A_hat = cross @ np.linalg.inv(cov)
    return np.linalg.norm(A_hat - A[None], 2, axis=(1, 2))


def rate_inputs(k=20, gamma2=10.0, seed=0):
    """A poorly aimed single-channel sinusoid and a redesigned input of equal
    power; returns both with their lambda_min(sigma^2 Gamma_k + Gamma~_k^u)."""
    A, B = RATE_A, np.eye(2)
    base = gram_noise(A, k)
    poor = PeriodicInput.sinusoid([math.sqrt(2 * gamma2), 0.0], 1, k, gamma2=gamma2)
    prob = DesignProblem(A, B, gamma2, k, base)
    good = opt_input(prob, seed=seed).input
    lam = [float(np.linalg.eigvalsh(base + gamma_k_u_tilde(A, B, i))[0]) for i in (poor, good)]
    return (poor, good), lam


def check_rate(trials, tol, seed):
    A, B = RATE_A, np.eye(2)
    (poor, good), lam = rate_inputs(seed=seed)
    consts = {}
    worst = 0.0
    for name, inp in (("poor", poor), ("good", good)):
        u = inp.to_time_domain()[:, np.arange(RATE_HORIZONS[-1]) % inp.k].T
        c = []
        for j, T in enumerate(RATE_HORIZONS):
            errs = batch_errors(A, B, u, T, trials, stream(seed, "rate", name, j))
            c.append(float(np.median(errs)) * math.sqrt(T))
        consts[name] = c
        for a, b in zip(c, c[1:]):
            worst = max(worst, abs(b / a - 1))
    direction = consts["good"][-1] < consts["poor"][-1]
    ok = worst <= tol and direction and lam[1] >= 2 * lam[0]
    detail = (f"lambda_min {lam[0]:.3g} -> {lam[1]:.3g}; c(T) poor "
              f"{[round(v, 3) for v in consts['poor']]} good {[round(v, 3) for v in consts['good']]}")
    return ok, worst, tol, detail


def jordan_system():
    return gen_system(SystemSpec("jordan", d=4, rho=0.9))


def check_loop(trials, epochs, iso_ratio, oracle_ratio, seed):
    sys_true = jordan_system()
    cfg = ActiveConfig(gamma2=4.0, epochs=epochs)
    noise = NoiseModel(1.0)
    act, orc, iso = [], [], []
    for t in range(trials):
        s = derive_seed(seed, "trial", t)
        act.append(run_active(sys_true, noise, cfg, seed=s).final_error)
        orc.append(run_oracle(sys_true, noise, cfg, seed=s).final_error)
        iso.append(run_noise_baseline(sys_true, noise, np.eye(4), cfg, seed=s).final_error)
    ma, mo, mi = (float(np.median(v)) for v in (act, orc, iso))
    ok = ma <= iso_ratio * mi and ma <= oracle_ratio * mo
    return ok, ma / mi, iso_ratio, f"active/iso {ma / mi:.3f}, active/oracle {ma / mo:.3f}"


def check_budget(trials, epochs, seed):
    sys_true = jordan_system()
    g2 = 4.0
    cfg = ActiveConfig(gamma2=g2, epochs=epochs)
    window_power = {}
    book_ok = True
    for t in range(trials):
        rec = run_active(sys_true, NoiseModel(1.0), cfg, seed=derive_seed(seed, "budget", t),
                         keep_trajectory=True)
        start = 0
        for e in rec.epochs:
            book_ok &= e.T == cfg.cumulative_T(e.epoch) and e.k == cfg.k0 * 2**e.epoch
            n = cfg.epoch_length(e.epoch)
            u = rec.trajectory.inputs[start:start + n]
            start += n
            w = np.sum(u[: (n // e.k) * e.k] ** 2, axis=1).reshape(-1, e.k).mean(axis=1)
            window_power.setdefault(e.epoch, []).append(w)
    # per-period power averaged over trials, against gamma2 plus 3 standard errors
    worst, limit = -math.inf, g2
    for v in window_power.values():
        W = np.asarray(v)
        mean = W.mean(axis=0)
        se = W.std(axis=0, ddof=1) / math.sqrt(len(W)) if len(W) > 1 else np.zeros_like(mean)
        j = int(np.argmax(mean - 3 * se))
        if mean[j] - 3 * se[j] - g2 > worst - limit:
            worst, limit = float(mean[j]), g2 + 3 * float(se[j])
    ok = book_ok and worst <= limit
    return ok, worst, limit, f"bookkeeping {'exact' if book_ok else 'WRONG'}"


def check_gradient(n, tol, seed):
    rng = stream(seed, "gradient")
    worst = 0.0
    for _ in range(n):
        d, p = int(rng.integers(2, 6)), int(rng.integers(1, 4))
        k = int(rng.integers(4, 33))
        A, B = _random_system(rng, d, p, float(rng.uniform(0.2, 0.85)))
        inp = PeriodicInput.random(p, k, rng, power=1.0)
        w = rng.standard_normal(d)
        w /= np.linalg.norm(w)
        D = rng.standard_normal((d, d))
        h = 1e-6
        fd = (hk_quadratic(A + h * D, B, inp, None, w) - hk_quadratic(A - h * D, B, inp, None, w)) / (2 * h)
        an = hk_directional_derivative(A, B, inp, None, w, D)
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    return worst < tol, worst, tol, f"{n} random instances"


def check_determinism(seed):
    from .experiment import ExperimentConfig, rows_to_csv, run_experiment, run_policies
    from .plot import render_svg

    cfg = ExperimentConfig(system=SystemSpec("jordan", d=2, rho=0.8), policies=("active", "iso_noise"),
                           trials=2, epochs=2, seed=seed)
    a = rows_to_csv(run_policies(cfg)[0]), render_svg(run_experiment(cfg))
    b = rows_to_csv(run_policies(cfg)[0]), render_svg(run_experiment(cfg))
    same = a == b
    return same, float(same), 1.0, "CSV and SVG byte-identical" if same else "outputs differ"


def verify_suite(level: str = "fast", seed: int = 0, config: VerifyConfig | None = None,
                 only=None, progress=None) -> VerifyReport:
    """Run the verification checks. ``fast`` divides trial counts by
    ``config.shrink`` (never below a small floor)."""
    if level not in LEVELS:
        raise ConfigError(f"level must be one of {LEVELS}")
    c = config or VerifyConfig()
    s = c.shrink if level == "fast" else 1

    def n(full, floor=1):
        return max(floor, full // s)

    checks = {
        "parseval": lambda: check_parseval(c.parseval_inputs, c.parseval_rel_tol, seed),
        "gamma_k_u_oracle": lambda: check_oracle(n(c.oracle_systems, 5), c.oracle_rel_tol, seed),
        "scalar_design": lambda: check_scalar_design(c.scalar_abs_tol, seed),
        "noise_closed_form": lambda: check_noise_closed_form(c.noise_spectra, c.noise_rel_tol, seed,
                                                         c.noise_gap_tol),
        "noise_gap": lambda: check_noise_gap(c.gap_dim, c.gap_period, c.gap_min_factor, seed),
        "tail_bound": lambda: check_tail(n(c.tail_trials, 200), seed),
        "rate_scaling": lambda: check_rate(n(c.rate_trials, 200), c.rate_rel_tol, seed),
        "active_vs_baselines": lambda: check_loop(
            n(c.loop_trials, 3), c.loop_epochs if level == "full" else 4,
            c.loop_iso_ratio, c.loop_oracle_ratio, seed),
        "power_budget": lambda: check_budget(
            n(c.budget_trials, 5), c.budget_epochs if level == "full" else 2, seed),
        "gradient": lambda: check_gradient(c.grad_instances, c.grad_rel_tol, seed),
        "determinism": lambda: check_determinism(seed),
    }
    report = VerifyReport(level=level, seed=seed)
    for name, fn in checks.items():
        if only is not None and name not in only:
            continue
        t0 = time.perf_counter()
        ok, measured, threshold, detail = fn()
        res = CheckResult(name, bool(ok), float(measured), float(threshold), detail,
                          time.perf_counter() - t0)
        report.checks.append(res)
        if progress is not None:
            progress(res)
    return report
