"""The epoch-based active identification loop and its noise-driven baselines."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .design import MODES, DesignProblem, objective_matrix, opt_input, update_inputs
from .errors import ActiveIDError, ConfigError, StabilityError
from .estimate import epsilon_bound, least_squares, least_squares_joint
from .freq import PeriodicInput
from .lds import LinSys, NoiseModel, Trajectory, require_stable, simulate
from .rng import derive_seed, seed_key

CSV_FIELDS = ("trial", "policy", "epoch", "T", "k", "eps", "spectral_error", "objective", "power")


@dataclass
class ActiveConfig:
    """Settings for one run.

    ``epochs`` counts the designed epochs after the noise-only warmup, so a
    run has ``epochs + 1`` epochs in total. Epoch i lasts T0 * 3^i steps
    and, for i >= 1, plays a period-min(k0 2^i, k_cap) input.
    """

    T0: int = 100
    k0: int = 20
    delta: float = 0.1
    gamma2: float = 1.0
    mode: str = "greedy"
    sigma_u2: float | None = None  # exploration noise variance, default gamma2 / (2p)
    epochs: int = 6
    k_cap: int | None = 1280
    estimate_B: bool = False
    eps_form: str = "trajectory"
    opt_max_iters: int = 300
    track_oracle: bool = False  # also solve the design on the true system each epoch

    def __post_init__(self):
        if self.k0 < 2 or self.T0 < self.k0:
            raise ConfigError("need T0 >= k0 >= 2")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if not self.gamma2 > 0:
            raise ConfigError("gamma2 must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.k_cap is not None and self.k_cap < self.k0:
            raise ConfigError("k_cap must be >= k0")
        if self.sigma_u2 is not None and self.sigma_u2 < 0:
            raise ConfigError("sigma_u2 must be nonnegative")

    def epoch_length(self, i: int) -> int:
        return self.T0 * 3**i

    def period(self, i: int) -> int:
        k = self.k0 * 2**i
        return k if self.k_cap is None else min(k, self.k_cap)

    def cumulative_T(self, i: int) -> int:
        """Steps played through the end of epoch i: (T0/2)(3^{i+1} - 1)."""
        return self.T0 * (3 ** (i + 1) - 1) // 2


@dataclass
class EpochRecord:
    epoch: int
    T: int
    k: int
    eps: float
    spectral_error: float
    power: float
    objective: float = float("nan")
    true_objective: float = float("nan")
    oracle_objective: float = float("nan")
    sigma_u2: float = float("nan")
    fallback: str | None = None
    ridge: bool = False


@dataclass
class RunRecord:
    policy: str
    seed: tuple
    epochs: list = field(default_factory=list)
    A_hat: np.ndarray | None = None
    trajectory: Trajectory | None = field(default=None, repr=False)

    @property
    def final_error(self) -> float:
        return self.epochs[-1].spectral_error

    def csv_rows(self, trial: int) -> list:
        return [
            (trial, self.policy, e.epoch, e.T, e.k, e.eps, e.spectral_error, e.objective, e.power)
            for e in self.epochs
        ]

    def to_json(self) -> dict:
        return {
            "policy": self.policy,
            "seed": list(self.seed),
            "epochs": [_finite(asdict(e)) for e in self.epochs],
            "A_hat": None if self.A_hat is None else self.A_hat.tolist(),
        }


def _finite(row: dict) -> dict:
    # NaN marks "not computed"; JSON has no NaN, so write null
    return {k: None if isinstance(v, float) and math.isnan(v) else v for k, v in row.items()}


def _concat(parts):
    states = np.concatenate([parts[0].states[:1]] + [p.states[1:] for p in parts])
    inputs = np.concatenate([p.inputs for p in parts])
    noise = np.concatenate([p.noise for p in parts])
    return Trajectory(states=states, inputs=inputs, seed=parts[0].seed, noise=noise)


def _fit(traj, B, estimate_B):
    if estimate_B:
        est = least_squares_joint(traj, ridge_fallback=True)
        return est, est.B_hat
    return least_squares(traj, B, ridge_fallback=True), B


def _epsilon(est, B_hat, config, k, sigma2, sigma_u2, T, inp):
    try:
        plugin = LinSys(est.A_hat, B_hat)
        return epsilon_bound(est, config.delta, plugin, k, sigma2, sigma_u2, config.gamma2, T,
                             inp=inp, form=config.eps_form)
    except (StabilityError, np.linalg.LinAlgError, ActiveIDError, ValueError):
        return math.inf


def _true_value(A_true, B, past, Tn, inp):
    problem = DesignProblem(A_true, B, 1.0, inp.k, past, horizon_weight=Tn)
    return float(np.linalg.eigvalsh(objective_matrix(problem, inp))[0])


def _run(policy, sys_true: LinSys, noise: NoiseModel, config: ActiveConfig, seed,
         keep_trajectory=False) -> RunRecord:
    require_stable(sys_true.A)
    key = seed_key(seed)
    p = sys_true.p
    sigma2 = noise.sigma_proc**2
    g2 = config.gamma2
    inp, sigma_u2 = None, g2 / p
    fallback = None
    design_value = float("nan")
    true_value = float("nan")
    oracle_value = float("nan")
    parts = []
    x = np.zeros(sys_true.d)
    record = RunRecord(policy=policy, seed=key)
    for i in range(config.epochs + 1):
        T_i = config.epoch_length(i)
        k_i = config.period(i)
        seg = simulate(sys_true, NoiseModel(noise.sigma_proc, math.sqrt(sigma_u2)), inp, T_i,
                       x0=x, seed=(*key, i))
        parts.append(seg)
        x = seg.states[-1]
        traj = _concat(parts)
        T = traj.T
        est, B_hat = _fit(traj, sys_true.B, config.estimate_B)
        eps = _epsilon(est, B_hat, config, k_i, sigma2, sigma_u2, T, inp)
        record.epochs.append(EpochRecord(
            epoch=i, T=T, k=k_i, eps=eps, spectral_error=est.error(sys_true.A),
            power=float(np.mean(np.sum(seg.inputs**2, axis=1))),
            objective=design_value, true_objective=true_value, oracle_objective=oracle_value,
            sigma_u2=sigma_u2, fallback=fallback, ridge=est.regularized,
        ))
        if i == config.epochs:
            break
        k_next = config.period(i + 1)
        A_plan = sys_true.A if policy == "oracle" else est.A_hat
        B_plan = sys_true.B if policy == "oracle" else B_hat
        past = est.state_cov()
        upd = update_inputs(A_plan, B_plan, past, g2, k_next, eps, mode=config.mode, T=T,
                            T0=config.T0, sigma2=sigma2, sigma_u2=config.sigma_u2,
                            seed=derive_seed(key, "design", i),
                            opt_kwargs={"max_iters": config.opt_max_iters, "certify": False,
                                        "polish": False})
        inp, sigma_u2, fallback = upd.input, upd.sigma_u2, upd.fallback
        Tn = 2 * T + config.T0
        design_value = upd.design.objective if upd.design is not None else float("nan")
        true_value = _true_value(sys_true.A, sys_true.B, past, Tn, inp)
        oracle_value = float("nan")
        if config.track_oracle and upd.design is not None:
            problem = DesignProblem(sys_true.A, sys_true.B, upd.design.input.gamma2, k_next, past,
                                    horizon_weight=Tn, support=upd.support)
            oracle_value = opt_input(problem, seed=derive_seed(key, "oracle", i),
                                     max_iters=config.opt_max_iters, certify=False,
                                     polish=False).objective
    record.A_hat = est.A_hat
    if keep_trajectory:
        record.trajectory = traj
    return record


def run_active(sys_true: LinSys, noise: NoiseModel, config: ActiveConfig, seed=0,
               keep_trajectory: bool = False) -> RunRecord:
    """Warmup on isotropic noise, then alternate: fit on all data, design the
    next periodic input on the estimate, play it plus exploration noise."""
    return _run("active", sys_true, noise, config, seed, keep_trajectory)


def run_oracle(sys_true: LinSys, noise: NoiseModel, config: ActiveConfig, seed=0,
               keep_trajectory: bool = False) -> RunRecord:
    """As :func:`run_active`, but inputs are designed on the true system."""
    return _run("oracle", sys_true, noise, config, seed, keep_trajectory)


def run_noise_baseline(sys_true: LinSys, noise: NoiseModel, input_cov, config: ActiveConfig,
                       seed=0, policy: str = "noise", keep_trajectory: bool = False) -> RunRecord:
    """Play u_t ~ N(0, input_cov) throughout, with estimates logged at the
    same checkpoints (and the same per-epoch noise streams) as the active run."""
    require_stable(sys_true.A)
    key = seed_key(seed)
    input_cov = np.asarray(input_cov, dtype=float)
    parts = []
    x = np.zeros(sys_true.d)
    record = RunRecord(policy=policy, seed=key)
    for i in range(config.epochs + 1):
        seg = simulate(sys_true, NoiseModel(noise.sigma_proc, 0.0), None, config.epoch_length(i),
                       x0=x, seed=(*key, i), input_cov=input_cov)
        parts.append(seg)
        x = seg.states[-1]
        traj = _concat(parts)
        est, _ = _fit(traj, sys_true.B, config.estimate_B)
        record.epochs.append(EpochRecord(
            epoch=i, T=traj.T, k=config.period(i), eps=float("nan"),
            spectral_error=est.error(sys_true.A),
            power=float(np.mean(np.sum(seg.inputs**2, axis=1))),
            objective=float(np.linalg.eigvalsh(est.state_cov())[0]),
            ridge=est.regularized,
        ))
    record.A_hat = est.A_hat
    if keep_trajectory:
        record.trajectory = traj
    return record
