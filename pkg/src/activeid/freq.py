"""Periodic inputs in the frequency domain and their steady-state covariates.

Frequency indices run over l = 1..k with theta_l = 2 pi l / k; l = k is the
DC bin. A PeriodicInput stores the DFT coefficients U_l = sum_t u_t
e^{-j theta_l t} column-wise, column ``l - 1`` holding U_l. The matching
time-domain signal is indexed by t mod k, so column ``i`` of
``to_time_domain()`` is u_t for every t congruent to i.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NormalizationError, SingularError, StabilityError
from .lds import beta_bound, propagate, spectral_radius

IMAG_TOL = 1e-9
_SETTLE_CAP = 10**6


def thetas(k: int) -> np.ndarray:
    """Angles theta_l = 2 pi l / k for l = 1..k."""
    return 2 * np.pi * np.arange(1, k + 1) / k


def conj_index(k: int) -> np.ndarray:
    """Column index of U_{k-l} for each column of U_l (DC maps to itself)."""
    ell = np.arange(1, k + 1)
    return (k - ell - 1) % k


@dataclass(frozen=True)
class PeriodicInput:
    """A real period-k input held as its DFT coefficients (p x k complex).

    ``gamma2`` is the power budget the input was designed for; it is carried
    along for serialization and is not enforced here.
    """

    U: np.ndarray
    gamma2: float = 1.0

    def __post_init__(self):
        U = np.array(self.U, dtype=complex, copy=True)
        if U.ndim == 1:
            U = U.reshape(1, -1)
        if U.ndim != 2 or U.shape[1] < 2:
            raise DimensionError(f"U must be p x k with k >= 2, got shape {U.shape}")
        U.setflags(write=False)
        object.__setattr__(self, "U", U)

    @property
    def k(self) -> int:
        return self.U.shape[1]

    @property
    def p(self) -> int:
        return self.U.shape[0]

    @property
    def dc(self) -> np.ndarray:
        return self.U[:, -1]

    def symmetry_error(self) -> float:
        return float(np.max(np.abs(self.U - np.conj(self.U[:, conj_index(self.k)])), initial=0.0))

    def is_conjugate_symmetric(self, tol: float = 1e-10) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.U), initial=0.0)))
        return self.symmetry_error() <= tol * scale

    def is_zero_mean(self, tol: float = 1e-10) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.U), initial=0.0)))
        return float(np.max(np.abs(self.dc))) <= tol * scale

    def energy(self) -> float:
        """sum_l ||U_l||^2, constrained to be <= k^2 gamma^2."""
        return float(np.sum(np.abs(self.U) ** 2))

    def power(self) -> float:
        """Average time-domain power (1/k) sum_t ||u_t||^2 via Parseval."""
        return self.energy() / self.k**2

    def to_time_domain(self) -> np.ndarray:
        return to_time_domain(self)

    def shifted(self, s: int) -> "PeriodicInput":
        """The input delayed by ``s`` steps (u'_t = u_{t-s})."""
        phase = np.exp(-1j * thetas(self.k) * s)
        return PeriodicInput(self.U * phase, self.gamma2)

    def to_json(self) -> dict:
        coeffs = [[[float(c.real), float(c.imag)] for c in self.U[:, j]] for j in range(self.k)]
        return {"k": self.k, "gamma2": float(self.gamma2), "coeffs": coeffs}

    @classmethod
    def from_json(cls, obj) -> "PeriodicInput":
        if isinstance(obj, str):
            obj = json.loads(obj)
        k = int(obj["k"])
        coeffs = obj["coeffs"]
        if len(coeffs) != k:
            raise DimensionError(f"expected {k} coefficient columns, got {len(coeffs)}")
        U = np.array([[complex(re, im) for re, im in col] for col in coeffs]).T
        return cls(U.reshape(-1, k), float(obj.get("gamma2", 1.0)))

    @classmethod
    def zeros(cls, p: int, k: int, gamma2: float = 1.0) -> "PeriodicInput":
        return cls(np.zeros((p, k), dtype=complex), gamma2)

    @classmethod
    def sinusoid(cls, amplitudes, ell: int, k: int, gamma2: float | None = None,
                 phases=None) -> "PeriodicInput":
        """u_t = a_i cos(theta_l t + phi_i) per channel i, for 0 < l < k."""
        a = np.atleast_1d(np.asarray(amplitudes, dtype=float))
        phi = np.zeros_like(a) if phases is None else np.atleast_1d(phases)
        u = a[:, None] * np.cos(2 * np.pi * ell * np.arange(k)[None, :] / k + phi[:, None])
        inp = from_time_domain(u)
        return cls(inp.U, inp.power() if gamma2 is None else gamma2)

    @classmethod
    def random(cls, p: int, k: int, rng, power: float = 1.0, zero_mean: bool = True,
               support=None) -> "PeriodicInput":
        """A random real input with the requested average power."""
        U = rng.standard_normal((p, k)) + 1j * rng.standard_normal((p, k))
        U = 0.5 * (U + np.conj(U[:, conj_index(k)]))
        mask = np.ones(k, bool)
        if support is not None:
            mask[:] = False
            mask[np.asarray(sorted(support), dtype=int) - 1] = True
            mask &= mask[conj_index(k)]
        if zero_mean:
            mask[-1] = False
        U[:, ~mask] = 0
        if k % 2 == 0:
            U[:, k // 2 - 1] = U[:, k // 2 - 1].real
        U[:, -1] = U[:, -1].real
        e = np.sum(np.abs(U) ** 2)
        if e > 0:
            U *= math.sqrt(power * k**2 / e)
        return cls(U, power)


def to_time_domain(inp: PeriodicInput) -> np.ndarray:
    """Real p x k signal; raises if the IDFT has an imaginary residue."""
    k = inp.k
    # column m of the FFT ordering holds l = m (mod k); our column l-1 holds l
    fft_order = np.roll(inp.U, 1, axis=1)
    u = np.fft.ifft(fft_order, axis=1)
    scale = max(1.0, float(np.max(np.abs(u), initial=0.0)))
    if np.max(np.abs(u.imag), initial=0.0) > 1e-10 * scale:
        raise ValueError("coefficients are not conjugate symmetric (complex signal)")
    return u.real.copy()


def from_time_domain(u, gamma2: float | None = None) -> PeriodicInput:
    """Inverse of to_time_domain: column i of ``u`` is u_t for t = i mod k."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u.reshape(1, -1)
    U = np.roll(np.fft.fft(u, axis=1), -1, axis=1)
    k = u.shape[1]
    power = float(np.sum(u**2)) / k
    return PeriodicInput(U, power if gamma2 is None else gamma2)


def transfer(A, B, theta) -> np.ndarray:
    """G(e^{j theta}) = (e^{j theta} I - A)^{-1} B via an LU solve.

    A scalar ``theta`` gives a d x p matrix; an array gives shape (n, d, p).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(d, -1)
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    z = np.exp(1j * th)
    eig = np.linalg.eigvals(A)
    if np.min(np.abs(z[:, None] - eig[None, :]), initial=np.inf) < 1e-12:
        raise SingularError("e^{j theta} is an eigenvalue of A")
    M = z[:, None, None] * np.eye(d) - A
    try:
        G = np.linalg.solve(M, np.broadcast_to(B.astype(complex), (len(th), d, B.shape[1])))
    except np.linalg.LinAlgError as exc:
        raise SingularError(str(exc)) from exc
    if not np.all(np.isfinite(G)):
        raise SingularError("transfer function is not finite")
    return G[0] if np.ndim(theta) == 0 else G


def resolvent(A, theta) -> np.ndarray:
    """(e^{j theta} I - A)^{-1}, batched like :func:`transfer`."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return transfer(A, np.eye(A.shape[0]), theta)


def _hermitian_to_real(M, what: str) -> np.ndarray:
    M = 0.5 * (M + M.conj().T)
    scale = max(1e-300, float(np.max(np.abs(M), initial=0.0)))
    if np.max(np.abs(M.imag), initial=0.0) > IMAG_TOL * max(1.0, scale):
        raise ArithmeticError(f"{what}: imaginary residue exceeds tolerance")
    return M.real.copy()


def gamma_k_u_tilde(A, B, inp: PeriodicInput) -> np.ndarray:
    """Unnormalized steady-state covariates (1/k^2) sum_l G_l U_l U_l^H G_l^H.

    Equals the average of x_t x_t^T over one period in steady state.
    """
    k = inp.k
    G = transfer(A, B, thetas(k))
    X = np.einsum("ldp,pl->ld", G, inp.U)  # steady-state DFT coefficients
    M = np.einsum("ld,le->de", X, X.conj()) / k**2
    return _hermitian_to_real(M, "gamma_k_u")


def gamma_k_u(A, B, inp: PeriodicInput) -> np.ndarray:
    """Steady-state covariates normalized by the input's average power."""
    require = spectral_radius(A)
    if require >= 1:
        raise StabilityError(f"spectral radius {require:.6g} >= 1")
    power = inp.power()
    if power <= 0:
        raise NormalizationError("zero-power input; use gamma_k_u_tilde instead")
    return gamma_k_u_tilde(A, B, inp) / power


def noiseless_response(A, B, inp: PeriodicInput, T: int, x0=None) -> np.ndarray:
    """States x_0..x_T driven only by the periodic input, shape (T+1, d)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(d, -1)
    per = inp.to_time_domain()
    u = per[:, np.arange(T) % inp.k].T
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    return propagate(A, x0, u @ B.T)


def gamma_k_u_time_oracle(A, B, inp: PeriodicInput, warmup_periods: int,
                          avg_periods: int = 1) -> np.ndarray:
    """Time-domain estimate of gamma_k_u.

    Simulates noiselessly from x_0 = 0 for ``warmup_periods * k`` steps and
    averages x_t x_t^T / power over the next ``avg_periods * k`` steps.
    """
    k = inp.k
    power = inp.power()
    if power <= 0:
        raise NormalizationError("zero-power input")
    W = warmup_periods * k
    X = noiseless_response(A, B, inp, W + avg_periods * k)[W + 1:]
    return X.T @ X / (len(X) * power)


@dataclass(frozen=True)
class SteadyStateSplit:
    """Periodic steady state (one period, shape (k, d)) and transient offset.

    ``ss[i]`` is x_t^ss for t = i mod k; the noiseless response from x_0 is
    x_t = x_t^ss + A^t (x_0 - x_0^ss).
    """

    ss: np.ndarray
    transient_coeff: np.ndarray

    def reconstruct(self, A, T: int) -> np.ndarray:
        A = np.asarray(A, dtype=float)
        k, d = self.ss.shape
        out = np.empty((T + 1, d))
        tr = self.transient_coeff.copy()
        for t in range(T + 1):
            out[t] = self.ss[t % k] + tr
            tr = A @ tr
        return out


def steady_state_split(A, B, inp: PeriodicInput, x0=None) -> SteadyStateSplit:
    k = inp.k
    G = transfer(A, B, thetas(k))
    X = np.einsum("ldp,pl->dl", G, inp.U)
    xss = to_time_domain(PeriodicInput(X)).T  # (k, d), row i = x_t^ss, t = i mod k
    d = xss.shape[1]
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).reshape(d)
    return SteadyStateSplit(ss=xss, transient_coeff=x0 - xss[0])


@dataclass(frozen=True)
class SettleTime:
    """Empirical settling time and the analytic bound it is compared against.

    ``t_ss`` is the end of the first settled window: every period-long window
    starting at ``start = t_ss - k`` or later deviates by at most zeta * k.
    ``analytic`` is the transient bound expressed the same way.
    """

    t_ss: int
    start: int
    analytic: float


def _window_deviation(X, w, k, target):
    # X: (n_windows * k, d) states x_{T'+1..}; deviation per aligned window
    y = (X @ w).reshape(-1, k)
    y = y - y.mean(axis=1, keepdims=True)
    return np.abs(np.sum(y**2, axis=1) - target)


def settle_time(A, B, inp: PeriodicInput, x0=None, zeta: float = 1e-3, w=None) -> SettleTime:
    """Smallest multiple-of-k window start after which the noiseless response
    has period power within ``zeta * k`` of steady state along ``w``.

    Without ``w`` the worst case over the eigenvectors of the steady-state
    covariates is used.
    """
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    rho = spectral_radius(A)
    if rho >= 1:
        raise StabilityError("unstable system never settles")
    k = inp.k
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).reshape(d)
    gt = gamma_k_u_tilde(A, B, inp)
    if w is None:
        probes = np.linalg.eigh(gt)[1].T
    else:
        w = np.asarray(w, dtype=float).reshape(d)
        probes = (w / np.linalg.norm(w))[None, :]

    horizon = 4 * k
    while True:
        n_win = horizon // k
        X = noiseless_response(A, B, inp, n_win * k, x0)[1:]
        fail = np.zeros(n_win, bool)
        for v in probes:
            fail |= _window_deviation(X, v, k, k * (v @ gt @ v)) > zeta * k
        bad = np.flatnonzero(fail)
        last_bad = -1 if bad.size == 0 else int(bad[-1])
        if last_bad < n_win // 2:
            start = (last_bad + 1) * k
            break
        horizon *= 2
        if horizon > _SETTLE_CAP:
            raise StabilityError(f"response did not settle within {_SETTLE_CAP} steps")

    split = steady_state_split(A, B, inp, x0)
    analytic = max(
        analytic_settle_start(A, split.transient_coeff, v @ gt @ v, k, zeta) for v in probes
    )
    analytic_end = math.ceil(analytic / k) * k + k if math.isfinite(analytic) else math.inf
    return SettleTime(t_ss=start + k, start=start, analytic=analytic_end)


def analytic_settle_start(A, offset, wgw: float, k: int, zeta: float) -> float:
    """Transient bound on the window start, clipped at 0.

    ``offset`` is x_0 - x_0^ss and ``wgw`` is w^T Gamma~_k^u w.
    """
    beta, rb = beta_bound(A)
    r = float(np.linalg.norm(offset))
    if r == 0.0:
        return 0.0
    if rb == 0.0:
        return 1.0
    log_rb = math.log(rb)
    t1 = math.log(k * zeta * (1 - rb**2) / (2 * r**2 * beta**2)) / (2 * log_rb)
    if wgw > 0:
        t2 = math.log(k * zeta * math.sqrt(1 - rb**2)
                      / (4 * r * beta * math.sqrt(k * wgw))) / log_rb
    else:
        t2 = -math.inf
    return max(0.0, t1, t2)
