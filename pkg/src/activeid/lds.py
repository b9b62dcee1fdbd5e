"""Linear dynamical systems: representation, simulation and Gramians.

The model is ``x_{t+1} = A x_t + B u_t + eta_t`` with isotropic Gaussian
process noise ``eta_t ~ N(0, sigma^2 I)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DimensionError, StabilityError
from .rng import seed_key, stream

_BETA_GRID = 512
_BETA_CHECK_STEPS = 100


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LinSys:
    """The pair (A, B) with state dimension d and input dimension p."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got shape {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise DimensionError(f"B must be {A.shape[0]} x p, got shape {B.shape}")
        if B.shape[1] < 1:
            raise DimensionError("p must be at least 1")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def rho(self) -> float:
        return spectral_radius(self.A)

    def is_stable(self) -> bool:
        return self.rho < 1.0


@dataclass(frozen=True)
class StableLinSys(LinSys):
    """A LinSys whose construction enforces spectral_radius(A) < 1."""

    def __post_init__(self):
        super().__post_init__()
        rho = spectral_radius(self.A)
        if rho >= 1.0:
            raise StabilityError(f"spectral radius {rho:.6g} >= 1")


@dataclass(frozen=True)
class NoiseModel:
    """Process-noise std ``sigma_proc`` and exploration-noise std ``sigma_input``."""

    sigma_proc: float = 1.0
    sigma_input: float = 0.0

    def __post_init__(self):
        if self.sigma_proc < 0 or self.sigma_input < 0:
            raise ValueError("noise standard deviations must be nonnegative")


@dataclass(frozen=True)
class Trajectory:
    """States x_0..x_T (shape (T+1, d)), inputs u_0..u_{T-1} (shape (T, p)).

    ``noise`` holds the process-noise draws eta_0..eta_{T-1}.
    """

    states: np.ndarray
    inputs: np.ndarray
    seed: tuple = ()
    noise: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.states) != len(self.inputs) + 1:
            raise DimensionError("len(states) must equal len(inputs) + 1")
        object.__setattr__(self, "states", _frozen(self.states))
        object.__setattr__(self, "inputs", _frozen(self.inputs))
        if self.noise is not None:
            object.__setattr__(self, "noise", _frozen(self.noise))

    @property
    def T(self) -> int:
        return len(self.inputs)

    def covariates(self) -> np.ndarray:
        """sum_{t<T} x_t x_t^T over the regressor states."""
        X = self.states[:-1]
        return X.T @ X


def spectral_radius(A) -> float:
    A = np.atleast_2d(np.asarray(A))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def require_stable(A) -> float:
    rho = spectral_radius(A)
    if not rho < 1.0:
        raise StabilityError(f"spectral radius {rho:.6g} >= 1")
    return rho


def matrix_powers(A, n: int) -> np.ndarray:
    """Stack [A^0, A^1, ..., A^{n-1}] by repeated multiplication."""
    A = np.asarray(A, dtype=float)
    out = np.empty((n,) + A.shape)
    if n == 0:
        return out
    out[0] = np.eye(A.shape[0])
    for s in range(1, n):
        out[s] = out[s - 1] @ A
    return out


def _resolvent_norm(A, r, theta) -> np.ndarray:
    d = A.shape[0]
    theta = np.atleast_1d(theta)
    M = r * np.exp(1j * theta)[:, None, None] * np.eye(d) - A
    smin = np.linalg.svd(M, compute_uv=False)[:, -1]
    with np.errstate(divide="ignore"):
        return 1.0 / smin


def beta_bound(A, grid: int = _BETA_GRID) -> tuple[float, float]:
    """Return ``(beta, rho_bar)`` with ``||A^k|| <= beta * rho_bar^k`` for all k.

    ``rho_bar = (1 + rho(A)) / 2`` and ``beta`` is the contour bound
    ``rho_bar * max_theta ||(rho_bar e^{j theta} I - A)^{-1}||``, maximized
    on a theta grid followed by a bounded local refinement.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rho = require_stable(A)
    rb = 0.5 + 0.5 * rho
    thetas = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
    norms = _resolvent_norm(A, rb, thetas)
    i = int(np.argmax(norms))
    h = 2 * np.pi / grid
    res = minimize_scalar(
        lambda th: -_resolvent_norm(A, rb, th)[0],
        bounds=(thetas[i] - h, thetas[i] + h),
        method="bounded",
        options={"xatol": 1e-12},
    )
    peak = max(norms[i], -res.fun)
    beta = max(1.0, rb * peak)

    # sanity post-check of the defining inequality
    P = np.eye(A.shape[0])
    for k in range(1, _BETA_CHECK_STEPS + 1):
        P = P @ A
        if np.linalg.norm(P, 2) > beta * rb**k * (1 + 1e-9) + 1e-300:
            raise ArithmeticError(f"beta post-check failed at k={k}")
    return float(beta), float(rb)


def truncation_horizon(A, tol: float = 1e-10) -> int:
    """Smallest t with beta^2 rho_bar^{2t} < tol (horizon standing in for infinity)."""
    beta, rb = beta_bound(A)
    if rb <= 0:
        return 1
    t = math.log(tol / beta**2) / (2 * math.log(rb))
    return max(1, int(math.floor(t)) + 1)


def _gram(A, M, t: int) -> np.ndarray:
    """sum_{s<t} (A^s M)(A^s M)^T by binary doubling of the horizon."""
    if t < 1:
        raise ValueError("horizon t must be >= 1")
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    block_pow = A.copy()  # A^{2^i}
    block_gram = M @ M.T  # Gramian of length 2^i
    pow_acc = np.eye(d)  # A^{n}, n = steps already accumulated
    G = np.zeros((d, d))
    while True:
        if t & 1:
            G += pow_acc @ block_gram @ pow_acc.T
            pow_acc = pow_acc @ block_pow
        t >>= 1
        if not t:
            break
        block_gram = block_gram + block_pow @ block_gram @ block_pow.T
        block_pow = block_pow @ block_pow
    return 0.5 * (G + G.T)


def gram_noise(A, t: int) -> np.ndarray:
    """Gamma_t(A) = sum_{s<t} A^s (A^s)^T."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return _gram(A, np.eye(A.shape[0]), t)


def gram_input(A, B, t: int) -> np.ndarray:
    """Gamma_t^B(A) = sum_{s<t} (A^s B)(A^s B)^T."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    return _gram(A, B, t)


def gram_eta(A, B, sigma2: float, sigma_u2: float, t: int) -> np.ndarray:
    """sigma^2 Gamma_t(A) + sigma_u^2 Gamma_t^B(A)."""
    return sigma2 * gram_noise(A, t) + sigma_u2 * gram_input(A, B, t)


def _deterministic_inputs(signal, T: int, p: int) -> np.ndarray:
    if signal is None:
        return np.zeros((T, p))
    if hasattr(signal, "to_time_domain"):
        per = signal.to_time_domain()  # (p, k), column i is u_t for t = i mod k
        if per.shape[0] != p:
            raise DimensionError(f"signal has p={per.shape[0]}, system has p={p}")
        k = per.shape[1]
        idx = np.arange(T) % k
        return per[:, idx].T.copy()
    arr = np.asarray(signal, dtype=float)
    if arr.ndim == 1 and p == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[1] != p or arr.shape[0] < T:
        raise DimensionError(f"signal must have shape (>= {T}, {p}), got {arr.shape}")
    return arr[:T].copy()


def _cov_factor(cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def simulate(sys: LinSys, noise: NoiseModel, signal, T: int, x0=None, seed=0,
             input_cov=None) -> Trajectory:
    """Simulate ``T`` steps of the system.

    ``signal`` is the deterministic input part: ``None`` (zero), a
    PeriodicInput (repeated from local time 0) or an array of shape (T, p).
    Exploration noise ``N(0, sigma_input^2 I)`` is added to it, or
    ``N(0, input_cov)`` when ``input_cov`` is given. Process and input
    noise come from independent named sub-streams of ``seed``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    d, p = sys.d, sys.p
    key = seed_key(seed)
    x = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).reshape(d)

    u = _deterministic_inputs(signal, T, p)
    z_in = stream(key, "input").standard_normal((T, p))
    if input_cov is not None:
        u += z_in @ _cov_factor(input_cov).T
    elif noise.sigma_input > 0:
        u += noise.sigma_input * z_in
    eta = noise.sigma_proc * stream(key, "process").standard_normal((T, d))

    states = propagate(sys.A, x, u @ sys.B.T + eta)
    return Trajectory(states=states, inputs=u, seed=key, noise=eta)


def propagate(A, x0, drive) -> np.ndarray:
    """States of ``x_{t+1} = A x_t + drive_t``; returns shape (T+1, d).

    Works in chunks of L steps: within a chunk the response to the drive is
    a block-Toeplitz product, and only the chunk boundary states are carried
    sequentially.
    """
    A = np.asarray(A, dtype=float)
    drive = np.asarray(drive, dtype=float)
    T, d = drive.shape
    L = max(1, min(64, 2048 // d, T))
    nc = -(-T // L)
    W = np.zeros((nc * L, d))
    W[:T] = drive
    P = matrix_powers(A, L + 1)  # A^0..A^L
    toep = np.zeros((L, d, L, d))
    for i in range(L):
        for j in range(i + 1):
            toep[i, :, j, :] = P[i - j]
    Z = (W.reshape(nc, L * d) @ toep.reshape(L * d, L * d).T).reshape(nc, L, d)
    starts = np.empty((nc, d))
    x = np.asarray(x0, dtype=float).reshape(d)
    AL = P[L]
    for c in range(nc):
        starts[c] = x
        x = AL @ x + Z[c, -1]
    # x_{cL+i+1} = A^{i+1} x_{cL} + Z[c, i]
    Z += np.einsum("iab,cb->cia", P[1:], starts)
    states = np.empty((T + 1, d))
    states[0] = x0
    states[1:] = Z.reshape(nc * L, d)[:T]
    return states


def simulate_batch(sys: LinSys, sigma_proc: float, T: int, n: int, rng,
                   inputs=None, x0=None) -> np.ndarray:
    """Simulate ``n`` independent noisy trajectories sharing a deterministic input.

    Used by Monte-Carlo checks; returns states of shape (n, T+1, d).
    ``inputs`` is either None, shape (T, p) (shared) or (n, T, p).
    """
    d = sys.d
    states = np.empty((n, T + 1, d))
    states[:, 0] = 0.0 if x0 is None else np.asarray(x0, dtype=float)
    if inputs is None:
        shared = np.zeros((T, d))
    else:
        inputs = np.asarray(inputs, dtype=float)
        shared = None if inputs.ndim == 3 else inputs @ sys.B.T
    At = np.array(sys.A).T
    x = states[:, 0].copy()
    for t in range(T):
        drive = shared[t] if shared is not None else inputs[:, t] @ sys.B.T
        x = x @ At + drive + sigma_proc * rng.standard_normal((n, d))
        states[:, t + 1] = x
    return states
