"""Least-squares identification and the plug-in confidence radius."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import RankError
from .freq import PeriodicInput, gamma_k_u_tilde, noiseless_response
from .lds import LinSys, Trajectory, beta_bound, gram_input, gram_noise, require_stable

COND_MAX = 1e12
RIDGE_SCALE = 1e-8


@dataclass
class Estimate:
    A_hat: np.ndarray
    cov: np.ndarray
    residual_norm: float
    B_hat: np.ndarray | None = None
    ridge: float = 0.0  # ridge weight used, 0 when the plain fit was well posed

    def __post_init__(self):
        self.A_hat = np.asarray(self.A_hat, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        if not np.all(np.isfinite(self.A_hat)):
            raise ValueError("A_hat has non-finite entries")

    @property
    def regularized(self) -> bool:
        return self.ridge > 0

    def state_cov(self) -> np.ndarray:
        d = self.A_hat.shape[0]
        return self.cov[:d, :d]

    def error(self, A_true) -> float:
        """Spectral-norm error ||A_hat - A_true||_2."""
        return float(np.linalg.norm(self.A_hat - np.asarray(A_true, dtype=float), 2))

    def to_json(self) -> dict:
        return {
            "A_hat": self.A_hat.tolist(),
            "B_hat": None if self.B_hat is None else np.asarray(self.B_hat).tolist(),
            "cov": self.cov.tolist(),
            "residual_norm": float(self.residual_norm),
            "ridge": float(self.ridge),
        }

    @classmethod
    def from_json(cls, obj) -> "Estimate":
        if isinstance(obj, str):
            obj = json.loads(obj)
        B = obj.get("B_hat")
        return cls(
            A_hat=np.array(obj["A_hat"], dtype=float),
            cov=np.array(obj["cov"], dtype=float),
            residual_norm=float(obj["residual_norm"]),
            B_hat=None if B is None else np.array(B, dtype=float),
            ridge=float(obj.get("ridge", 0.0)),
        )


def _deficient(cov, cond_max):
    """Orthonormal basis of the poorly excited subspace, or None."""
    lam, V = np.linalg.eigh(cov)
    top = lam[-1]
    if top <= 0:
        return V
    bad = lam <= top / cond_max
    return V[:, bad] if bad.any() else None


def _solve(Z, Y, cov, ridge_fallback, cond_max, block_of):
    sub = _deficient(cov, cond_max)
    ridge = 0.0
    if sub is None:
        # QR with column pivoting
        theta = scipy.linalg.lstsq(Z, Y, lapack_driver="gelsy")[0]
    elif ridge_fallback:
        n = cov.shape[0]
        ridge = RIDGE_SCALE * float(np.trace(cov)) / n
        if ridge <= 0:
            ridge = RIDGE_SCALE
        theta = np.linalg.solve(cov + ridge * np.eye(n), Z.T @ Y)
    else:
        raise RankError("covariates are rank deficient", subspace=sub, block=block_of(sub))
    resid = Y - Z @ theta
    return theta.T, float(np.linalg.norm(resid)), ridge


def least_squares(traj: Trajectory, B, ridge_fallback: bool = False,
                  cond_max: float = COND_MAX) -> Estimate:
    """A_hat = argmin_A sum_t ||x_{t+1} - A x_t - B u_t||^2 with B known.

    Raises RankError when the state covariates have condition number above
    ``cond_max``, unless ``ridge_fallback`` is set, in which case a tiny
    ridge (1e-8 * tr(cov) / d) is added and recorded on the estimate.
    """
    X = traj.states[:-1]
    B = np.asarray(B, dtype=float).reshape(X.shape[1], -1)
    Y = traj.states[1:] - traj.inputs @ B.T
    cov = X.T @ X
    A_hat, rn, ridge = _solve(X, Y, cov, ridge_fallback, cond_max, lambda sub: "x")
    return Estimate(A_hat=A_hat, cov=cov, residual_norm=rn, B_hat=None, ridge=ridge)


def least_squares_joint(traj: Trajectory, ridge_fallback: bool = False,
                        cond_max: float = COND_MAX) -> Estimate:
    """Regress x_{t+1} on the stacked [x_t; u_t] to recover both A and B."""
    X = traj.states[:-1]
    U = traj.inputs
    d = X.shape[1]
    Z = np.hstack([X, U])
    cov = Z.T @ Z

    def block_of(sub):
        if _deficient(cov[d:, d:], cond_max) is not None:
            return "u"
        if _deficient(cov[:d, :d], cond_max) is not None:
            return "x"
        return "xu"

    theta, rn, ridge = _solve(Z, traj.states[1:], cov, ridge_fallback, cond_max, block_of)
    return Estimate(A_hat=theta[:, :d], cov=cov, residual_norm=rn, B_hat=theta[:, d:], ridge=ridge)


# ---------------------------------------------------------------------------
# confidence radius


def gamma_bar_trajectory(plugin: LinSys, T: int, sigma2: float, sigma_u2: float, delta: float,
                         inp: PeriodicInput | None = None, deterministic_cov=None) -> np.ndarray:
    """4 ((1/T) sum_t x_t^u x_t^u^T + tr(sigma2 Gamma_T + sigma_u2 Gamma_T^B)(1 + log 2/delta) I).

    x^u is the noise-free response of ``plugin`` to the periodic input from
    rest; ``deterministic_cov`` may supply (1/T) sum x^u x^u^T directly.
    """
    A, B = plugin.A, plugin.B
    d = A.shape[0]
    if deterministic_cov is None:
        if inp is None:
            deterministic_cov = np.zeros((d, d))
        else:
            x = noiseless_response(A, B, inp, T)[:-1]
            deterministic_cov = x.T @ x / T
    tr = float(np.trace(sigma2 * gram_noise(A, T) + sigma_u2 * gram_input(A, B, T)))
    return 4 * (np.asarray(deterministic_cov) + tr * (1 + math.log(2 / delta)) * np.eye(d))


def gamma_bar_worst_case(plugin: LinSys, T: int, sigma2: float, gamma2: float,
                         delta: float) -> np.ndarray:
    """Input-agnostic alternative:
    16 beta^2 gamma2 / (1 - rho)^2 (1 + T) I + 4 tr(sigma2 Gamma_T + (gamma2/p) Gamma_T^B)(1 + log 2/delta) I.
    """
    A, B = plugin.A, plugin.B
    d, p = B.shape
    rho = require_stable(A)
    beta, _ = beta_bound(A)
    tr = float(np.trace(sigma2 * gram_noise(A, T) + (gamma2 / p) * gram_input(A, B, T)))
    return (16 * beta**2 * gamma2 / (1 - rho) ** 2 * (1 + T) + 4 * tr * (1 + math.log(2 / delta))) * np.eye(d)


def epsilon_bound(estimate: Estimate, delta: float, plugin: LinSys, k: int, sigma2: float,
                  sigma_u2: float, gamma2: float, T: int, inp: PeriodicInput | None = None,
                  form: str = "trajectory", deterministic_cov=None) -> float:
    """Plug-in confidence radius for ||A_hat - A||_2.

    sigma ||cov^{-1/2}|| sqrt(16 log(5^d/delta) + 8 log det(Gbar (Gamma_k^eta + Gamma~_k^u)^{-1} + I)),
    with every system quantity evaluated on ``plugin`` (typically the
    estimate itself). ``form`` selects the trajectory-based Gbar or the
    input-agnostic worst-case one.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    A, B = plugin.A, plugin.B
    require_stable(A)
    d = A.shape[0]
    if sigma2 == 0:
        return 0.0
    if form == "trajectory":
        Gbar = gamma_bar_trajectory(plugin, T, sigma2, sigma_u2, delta, inp, deterministic_cov)
    elif form == "worst_case":
        Gbar = gamma_bar_worst_case(plugin, T, sigma2, gamma2, delta)
    else:
        raise ValueError("form must be 'trajectory' or 'worst_case'")
    info = sigma2 * gram_noise(A, k) + sigma_u2 * gram_input(A, B, k)
    if inp is not None:
        info = info + gamma_k_u_tilde(A, B, inp)
    M = Gbar @ np.linalg.inv(info) + np.eye(d)
    sign, logdet = np.linalg.slogdet(M)
    if sign <= 0:
        return math.inf
    lam_min = float(np.linalg.eigvalsh(estimate.state_cov())[0])
    if lam_min <= 0:
        return math.inf
    return float(math.sqrt(sigma2) / math.sqrt(lam_min)
                 * math.sqrt(16 * math.log(5**d / delta) + 8 * logdet))
