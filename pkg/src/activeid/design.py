"""E-optimal design of periodic excitation inputs.

The central problem is

    maximize   lambda_min( horizon_weight * Gamma~_k^u(A, B) + past_cov )
    subject to (1/k^2) sum_l ||U_l||^2 <= gamma2, U_l = 0 off the support,

where Gamma~_k^u = (1/k^2) sum_l G_l U_l U_l^H G_l^H is the steady-state
covariance produced by the input. It is solved by Frank-Wolfe on the lift
W_l = U_l U_l^H (concave there), followed by extraction of one vector per
frequency and a local ascent directly on those vectors.

Design variables live on "bins": one bin per conjugate pair (l, k - l) with
0 < l < k/2 (complex vector, counted twice in the power), plus real bins for
the Nyquist frequency and, when allowed, DC.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import FeasibilityError, StabilityError
from .freq import PeriodicInput, gamma_k_u_tilde, resolvent, thetas, transfer
from .lds import gram_noise, matrix_powers, require_stable, spectral_radius, truncation_horizon
from .rng import stream

MODES = ("ft", "asymptotic", "greedy")


# ---------------------------------------------------------------------------
# problem / result types


@dataclass(frozen=True)
class DesignProblem:
    A_hat: np.ndarray
    B: np.ndarray
    gamma2: float
    k: int
    past_cov: np.ndarray
    horizon_weight: float = 1.0
    support: tuple = None  # frequency indices in 1..k; None means all
    zero_mean: bool = True

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A_hat, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        M = np.asarray(self.past_cov, dtype=float)
        if M.shape != A.shape:
            raise ValueError(f"past_cov must be {A.shape}, got {M.shape}")
        scale = max(1.0, float(np.max(np.abs(M), initial=0.0)))
        if np.max(np.abs(M - M.T), initial=0.0) > 1e-9 * scale:
            raise ValueError("past_cov must be symmetric")
        if np.linalg.eigvalsh(M)[0] < -1e-9 * scale:
            raise ValueError("past_cov must be PSD")
        if not self.gamma2 > 0:
            raise ValueError("gamma2 must be positive")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        support = tuple(range(1, self.k + 1)) if self.support is None else \
            tuple(sorted({int(s) for s in self.support}))
        if not support:
            raise FeasibilityError("empty frequency support", ["support"])
        if support[0] < 1 or support[-1] > self.k:
            raise ValueError("support indices must lie in 1..k")
        for name, val in (("A_hat", A), ("B", B), ("past_cov", 0.5 * (M + M.T))):
            val = val.copy()
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "support", support)

    @property
    def d(self) -> int:
        return self.A_hat.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    def to_json(self) -> dict:
        return {
            "A_hat": self.A_hat.tolist(),
            "B": self.B.tolist(),
            "gamma2": float(self.gamma2),
            "k": int(self.k),
            "past_cov": self.past_cov.tolist(),
            "horizon_weight": float(self.horizon_weight),
            "support": list(self.support),
            "zero_mean": bool(self.zero_mean),
        }

    @classmethod
    def from_json(cls, obj) -> "DesignProblem":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(
            A_hat=np.array(obj["A_hat"], dtype=float),
            B=np.array(obj["B"], dtype=float),
            gamma2=float(obj["gamma2"]),
            k=int(obj["k"]),
            past_cov=np.array(obj["past_cov"], dtype=float),
            horizon_weight=float(obj.get("horizon_weight", 1.0)),
            support=obj.get("support"),
            zero_mean=bool(obj.get("zero_mean", True)),
        )


@dataclass
class DesignResult:
    """Outcome of :func:`opt_input`.

    ``trace`` holds the Frank-Wolfe objective of the lifted problem per
    iteration (nondecreasing). ``relaxed_objective`` is its final value and
    ``upper_bound`` a certified bound on the optimum; ``objective`` is the
    value reached by the returned (rank-one per frequency) input, and
    ``truncation_loss`` the gap between the two.
    """

    input: PeriodicInput
    objective: float
    iterations: int
    trace: list = field(default_factory=list)
    relaxed_objective: float = float("nan")
    upper_bound: float = float("nan")
    truncation_loss: float = 0.0
    stalled: bool = False

    def to_json(self) -> dict:
        return {
            "input": self.input.to_json(),
            "objective": float(self.objective),
            "iterations": int(self.iterations),
            "trace": [float(v) for v in self.trace],
            "relaxed_objective": float(self.relaxed_objective),
            "upper_bound": float(self.upper_bound),
            "truncation_loss": float(self.truncation_loss),
            "stalled": bool(self.stalled),
        }

    @classmethod
    def from_json(cls, obj) -> "DesignResult":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(
            input=PeriodicInput.from_json(obj["input"]),
            objective=float(obj["objective"]),
            iterations=int(obj["iterations"]),
            trace=list(obj.get("trace", [])),
            relaxed_objective=float(obj.get("relaxed_objective", "nan")),
            upper_bound=float(obj.get("upper_bound", "nan")),
            truncation_loss=float(obj.get("truncation_loss", 0.0)),
            stalled=bool(obj.get("stalled", False)),
        )


# ---------------------------------------------------------------------------
# bins


@dataclass(frozen=True)
class _Bins:
    ells: np.ndarray  # frequency index per bin
    weight: np.ndarray  # 2 for conjugate pairs, 1 for real bins
    real: np.ndarray  # bool
    G: np.ndarray  # (n, d, p) transfer at each bin
    k: int

    @cached_property
    def GH(self) -> np.ndarray:
        return np.conj(np.swapaxes(self.G, 1, 2))


def _bins(problem: DesignProblem) -> _Bins:
    k = problem.k
    sup = set(problem.support)
    ells, weight, real = [], [], []
    for ell in range(1, (k + 1) // 2):
        if ell in sup and (k - ell) in sup:
            ells.append(ell)
            weight.append(2.0)
            real.append(False)
    if k % 2 == 0 and k // 2 in sup:
        ells.append(k // 2)
        weight.append(1.0)
        real.append(True)
    if not problem.zero_mean and k in sup:
        ells.append(k)
        weight.append(1.0)
        real.append(True)
    if not ells:
        raise FeasibilityError("support admits no feasible nonzero frequency", ["support"])
    ells = np.array(ells)
    G = transfer(problem.A_hat, problem.B, 2 * np.pi * ells / k)
    real = np.array(real)
    G[real] = G[real].real
    return _Bins(ells, np.array(weight), real, G, k)


def _response(bins: _Bins, z) -> np.ndarray:
    """sum_b w_b Re(G_b z_b z_b^H G_b^H) for one vector per bin."""
    Gz = np.einsum("bdp,bp->bd", bins.G, z)
    return np.einsum("b,bd,be->de", bins.weight, Gz, Gz.conj()).real


def _power(bins: _Bins, z) -> float:
    return float(np.sum(bins.weight * np.sum(np.abs(z) ** 2, axis=1)))


def _to_input(bins: _Bins, z, p: int, gamma2: float) -> PeriodicInput:
    k = bins.k
    U = np.zeros((p, k), dtype=complex)
    for b, ell in enumerate(bins.ells):
        if bins.real[b]:
            U[:, ell - 1] = k * z[b].real
        else:
            U[:, ell - 1] = k * z[b]
            U[:, k - ell - 1] = k * np.conj(z[b])
    return PeriodicInput(U, gamma2)


def _lam_min(X) -> float:
    return float(np.linalg.eigvalsh(X)[0])


def _softmin_weights(lam, V, mu):
    w = np.exp(-(lam - lam[0]) / mu)
    w /= w.sum()
    return (V * w) @ V.T


# ---------------------------------------------------------------------------
# feasibility and objective


def check_feasible(problem: DesignProblem, inp: PeriodicInput, tol: float = 1e-9) -> None:
    """Raise FeasibilityError naming every violated constraint."""
    bad = []
    if inp.k != problem.k or inp.p != problem.p:
        raise FeasibilityError(
            f"input is {inp.p}x{inp.k}, problem expects {problem.p}x{problem.k}", ["shape"])
    scale = max(1.0, float(np.max(np.abs(inp.U), initial=0.0)))
    if inp.energy() > problem.k**2 * problem.gamma2 * (1 + tol):
        bad.append("power")
    off = np.ones(problem.k, bool)
    off[np.array(problem.support) - 1] = False
    if np.max(np.abs(inp.U[:, off]), initial=0.0) > 1e-10 * scale:
        bad.append("support")
    if not inp.is_conjugate_symmetric():
        bad.append("conjugate_symmetry")
    if problem.zero_mean and not inp.is_zero_mean():
        bad.append("zero_mean")
    if bad:
        raise FeasibilityError("infeasible input: " + ", ".join(bad), bad)


def objective_matrix(problem: DesignProblem, inp: PeriodicInput) -> np.ndarray:
    return problem.past_cov + problem.horizon_weight * gamma_k_u_tilde(
        problem.A_hat, problem.B, inp)


def objective(problem: DesignProblem, inp: PeriodicInput) -> float:
    """lambda_min(horizon_weight * Gamma~_k^u + past_cov) of a feasible input."""
    check_feasible(problem, inp)
    return _lam_min(objective_matrix(problem, inp))


# ---------------------------------------------------------------------------
# optimizer


def _top_eig_per_bin(bins: _Bins, S):
    H = bins.GH @ S @ bins.G
    H = 0.5 * (H + np.conj(np.swapaxes(H, 1, 2)))
    lam, V = np.linalg.eigh(H)
    q = V[:, :, -1]
    if bins.real.any():
        # real bins need a real direction
        lr, Vr = np.linalg.eigh(H[bins.real].real)
        lam[bins.real, -1] = lr[:, -1]
        q = q.copy()
        q[bins.real] = Vr[:, :, -1]
    return lam[:, -1], q


def _expm_sym(Z):
    lam, Q = np.linalg.eigh(Z)
    lam = lam - lam[-1]
    e = np.exp(lam)
    diff = lam[:, None] - lam[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        dk = np.where(np.abs(diff) > 1e-9, (e[:, None] - e[None, :]) / diff,
                      0.5 * (e[:, None] + e[None, :]))
    return (Q * e) @ Q.T, Q, dk


def _certify(S0, base, kappa, top_fn, iters=200):
    """Tighten the dual bound tr(S base) + kappa * max(top_fn(S)) over S in the
    spectraplex, starting from S0. ``top_fn`` returns candidate values and the
    gradient (w.r.t. S) of each. Any S gives a valid bound.

    S = expm(Z) / tr expm(Z) keeps every iterate feasible, and its Jacobian is
    invertible, so stationary points of the smoothed bound are global minima.
    """
    d = S0.shape[0]
    iu = np.triu_indices(d)

    def exact(S):
        return float(np.sum(S * base)) + kappa * float(np.max(top_fn(S)[0]))

    def unpack(x):
        Z = np.zeros((d, d))
        Z[iu] = x
        return Z + np.triu(Z, 1).T

    best = exact(S0)
    scale = max(abs(best), 1e-300)

    def fg(x, tau):
        E, Q, dk = _expm_sym(unpack(x))
        t = float(np.trace(E))
        S = E / t
        vals, grads = top_fn(S)
        m = vals.max()
        e = np.exp((vals - m) / tau)
        val = float(np.sum(S * base)) + kappa * (m + tau * math.log(e.sum()))
        H = base + kappa * np.einsum("i,ide->de", e / e.sum(), grads)
        H = H - float(np.sum(H * S)) * np.eye(d)
        GZ = Q @ ((Q.T @ H @ Q) * dk) @ Q.T / t
        GZ = GZ + GZ.T - np.diag(np.diag(GZ))
        return val, GZ[iu]

    # start inside the spectraplex: a hard projector has a flat exponential map
    lam, V = np.linalg.eigh(0.8 * S0 + 0.2 * np.eye(d) / d)
    x = ((V * np.log(lam)) @ V.T)[iu]
    for tau_rel in (1e-2, 1e-3, 1e-4, 1e-6):
        res = minimize(fg, x, args=(tau_rel * scale / max(kappa, 1e-300),), jac=True,
                       method="L-BFGS-B", options={"maxiter": iters})
        x = res.x
        E = _expm_sym(unpack(x))[0]
        best = min(best, exact(E / np.trace(E)))
    return best


def _bin_top_fn(bins):
    def top(S):
        H = bins.GH @ S @ bins.G
        H = 0.5 * (H + np.conj(np.swapaxes(H, 1, 2)))
        lam, V = np.linalg.eigh(H)
        GV = np.swapaxes(bins.G @ V, 1, 2)
        grads = (GV[..., :, None] * GV.conj()[..., None, :]).real
        return lam.ravel(), grads.reshape(-1, S.shape[0], S.shape[0])
    return top


def _line_search(phi, s_fw):
    res = minimize_scalar(lambda s: -phi(s), bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-10})
    best_s, best_v = 0.0, phi(0.0)
    for s in (float(res.x), s_fw, 1.0):
        v = phi(s)
        if v > best_v:
            best_s, best_v = s, v
    return best_s, best_v


def _smooth_min(X, mu):
    lam = np.linalg.eigvalsh(X)
    return float(lam[0] - mu * math.log(np.sum(np.exp(-(lam - lam[0]) / mu))))


def _frank_wolfe(problem, bins, z0, max_iters, gain_tol, stall_iters, gap_tol, cert_every=50,
                 certify=True):
    """Frank-Wolfe on the lifted problem.

    Steps follow the soft-min surrogate (exact line search on it); the
    smoothing is halved whenever the surrogate's own Frank-Wolfe gap falls
    below the smoothing error. Returns the best lifted iterate, the trace of
    best hard objective values, a certified upper bound and the iteration count.
    """
    g2, Tbar, past = problem.gamma2, problem.horizon_weight, problem.past_cov
    d = problem.d
    W = np.einsum("bp,bq->bpq", z0, z0.conj())
    Gt = _response(bins, z0)
    lam, V = np.linalg.eigh(past + Tbar * Gt)
    best_f, best_W = float(lam[0]), W.copy()
    trace = [best_f]
    ub = math.inf
    mu_rel = 5e-2
    log_d = math.log(d + 1)
    top_fn = _bin_top_fn(bins)
    it = 0
    for it in range(1, max_iters + 1):
        scale = max(float(np.max(np.abs(lam))), 1e-300)
        mu = mu_rel * scale
        S = _softmin_weights(lam, V, mu)
        score, q = _top_eig_per_bin(bins, S)
        b = int(np.argmax(score))
        ub = min(ub, float(np.trace(S @ past)) + Tbar * g2 * float(score[b]))
        if certify and ub - best_f > gap_tol * scale and it % cert_every == 0:
            ub = min(ub, _certify(S, past, Tbar * g2, top_fn))
        if ub - best_f <= gap_tol * scale:
            break
        fw_gap = Tbar * (g2 * float(score[b]) - float(np.sum(S * Gt)))
        if fw_gap < mu * log_d and mu_rel > 1e-9:
            mu_rel *= 0.5
            continue
        Gq = bins.G[b] @ q[b]
        atom = g2 * (np.outer(Gq.real, Gq.real) if bins.real[b] else np.outer(Gq, Gq.conj()).real)
        base = past + Tbar * Gt
        step = Tbar * (atom - Gt)
        s, _ = _line_search(lambda s: _smooth_min(base + s * step, mu), 2.0 / (2.0 + it))
        if s > 0:
            W *= 1 - s
            W[b] += s * (g2 / bins.weight[b]) * np.outer(q[b], q[b].conj())
            Gt = (1 - s) * Gt + s * atom
            lam, V = np.linalg.eigh(past + Tbar * Gt)
            if lam[0] > best_f:
                best_f, best_W = float(lam[0]), W.copy()
        else:
            mu_rel = max(mu_rel * 0.5, 1e-9)
        trace.append(best_f)
        if len(trace) > stall_iters and trace[-1] - trace[-1 - stall_iters] < gain_tol * max(1.0, scale):
            break
    if certify and ub - best_f > gap_tol * max(float(np.max(np.abs(lam))), 1e-300):
        lam, V = np.linalg.eigh(past + Tbar * Gt)
        S = _softmin_weights(lam, V, mu_rel * max(float(np.max(np.abs(lam))), 1e-300))
        ub = min(ub, _certify(S, past, Tbar * g2, top_fn))
    return best_W, trace, ub, it


def _rescale(bins, z, gamma2):
    pw = _power(bins, z)
    return z * math.sqrt(gamma2 / pw) if pw > 0 else z


def _extract(bins: _Bins, W, gamma2):
    """Rank-one extraction: top eigenvector per bin, plus a variant that moves
    the remaining eigen-directions onto unused bins with similar response."""
    n, p, _ = W.shape
    lam, V = np.linalg.eigh(W)
    total = float(np.sum(bins.weight * np.trace(W, axis1=1, axis2=2).real))
    tiny = 1e-9 * max(total, 1e-300)
    z_top = V[:, :, -1] * np.sqrt(np.clip(lam[:, -1], 0, None))[:, None]
    z_top[bins.real] = z_top[bins.real].real
    used = lam[:, -1] > tiny
    extras = [(lam[b, i] * bins.weight[b], b, V[b, :, i])
              for b in range(n) for i in range(p - 1) if lam[b, i] > tiny]
    extras.sort(key=lambda e: -e[0])
    z_spread = z_top.copy()
    cand = ~used & ~bins.real
    for mass, b, q in extras:
        if not cand.any():
            break
        Gq = bins.G[b] @ q
        ref = np.outer(Gq, Gq.conj()).real
        idx = np.flatnonzero(cand)
        Gc = np.einsum("cdp,p->cd", bins.G[idx], q)
        resp = np.einsum("cd,ce->cde", Gc, Gc.conj()).real
        j = idx[int(np.argmin(np.linalg.norm(resp - ref, axis=(1, 2))))]
        z_spread[j] = math.sqrt(mass / bins.weight[j]) * q
        cand[j] = False
    return _rescale(bins, z_top, gamma2), _rescale(bins, z_spread, gamma2)


def _pack(bins, z):
    return np.concatenate([z.real.ravel(), z[~bins.real].imag.ravel()])


def _unpack(bins, x, shape):
    n, p = shape
    z = x[: n * p].reshape(n, p).astype(complex)
    z[~bins.real] += 1j * x[n * p:].reshape(-1, p)
    return z


def _refine(problem, bins, z0, iters=200):
    """Local ascent of a soft-min surrogate directly on one vector per bin."""
    g2, Tbar, past = problem.gamma2, problem.horizon_weight, problem.past_cov
    kappa = Tbar * g2
    shape = z0.shape
    c = bins.weight[:, None]
    G, Gc = bins.G, bins.G.conj()

    def fg(x, mu):
        z = _unpack(bins, x, shape)
        n = float(np.sum(c * np.abs(z) ** 2))
        if n <= 0:
            return 0.0, np.zeros_like(x)
        Gz = np.einsum("bdp,bp->bd", G, z)
        Q = np.einsum("b,bd,be->de", bins.weight, Gz, Gz.conj()).real
        lam, V = np.linalg.eigh(past + kappa * Q / n)
        e = np.exp(-(lam - lam[0]) / mu)
        val = lam[0] - mu * math.log(e.sum())
        S = (V * (e / e.sum())) @ V.T
        SGz = Gz @ S
        trSQ = float(np.sum(bins.weight * np.einsum("bd,bd->b", Gz.conj(), SGz).real))
        grad = kappa / n * (2 * c * np.einsum("bdp,bd->bp", Gc, SGz) - 2 * c * (trSQ / n) * z)
        return -val, -_pack(bins, grad)

    x = _pack(bins, z0)
    f0 = _lam_min(past + Tbar * _response(bins, z0))
    scale = max(abs(f0), float(np.max(np.abs(np.linalg.eigvalsh(past + Tbar * _response(bins, z0))))),
                1e-300)
    for mu_rel in (1e-2, 1e-3, 1e-4, 1e-5):
        res = minimize(fg, x, args=(mu_rel * scale,), jac=True, method="L-BFGS-B",
                       options={"maxiter": iters})
        x = res.x
    return _rescale(bins, _unpack(bins, x, shape), g2)


def _split_bins(bins: _Bins, p: int) -> _Bins:
    """Each bin repeated p times: one vector per column of a Gram factor."""
    rep = np.repeat(np.arange(len(bins.ells)), p)
    return _Bins(bins.ells[rep], bins.weight[rep], bins.real[rep], bins.G[rep], bins.k)


def _refine_lifted(problem, bins, W):
    """Polish the lifted iterate through full-rank factors W_b = Z_b Z_b^H."""
    n, p, _ = W.shape
    lam, V = np.linalg.eigh(W)
    Z = V * np.sqrt(np.clip(lam, 0, None))[:, None, :]  # columns are the factor vectors
    Z[bins.real] = Z[bins.real].real
    vbins = _split_bins(bins, p)
    cols = _refine(problem, vbins, np.swapaxes(Z, 1, 2).reshape(n * p, p))
    Z = np.swapaxes(cols.reshape(n, p, p), 1, 2)
    return np.einsum("bpi,bqi->bpq", Z, Z.conj())


def _lifted_value(problem, bins, W):
    resp = np.einsum("b,bdp,bpq,beq->de", bins.weight, bins.G, W, bins.G.conj()).real
    return _lam_min(problem.past_cov + problem.horizon_weight * resp)


def opt_input(problem: DesignProblem, seed=0, max_iters: int = 300, restarts: int = 1,
              gain_tol: float = 1e-9, stall_iters: int = 50, gap_tol: float = 1e-9,
              refine: bool = True, certify: bool = True, polish: bool = True) -> DesignResult:
    """Locally optimal power-constrained periodic input for ``problem``.

    Each restart draws one random feasible starting input, runs Frank-Wolfe
    on the lifted problem (exact line search, soft-min supergradient), and
    extracts one vector per frequency. The best restart is returned.
    ``certify`` spends extra work tightening the reported upper bound (the
    bound stays valid without it, only looser). ``polish`` runs a final
    local ascent on full-rank factors of the lifted iterate when p > 1.
    """
    require_stable(problem.A_hat)
    bins = _bins(problem)
    n, p = len(bins.ells), problem.p
    Tbar, past = problem.horizon_weight, problem.past_cov

    def value(z):
        return _lam_min(past + Tbar * _response(bins, z))

    best = None
    for r in range(max(1, restarts)):
        rng = stream(seed, "opt_input", r)
        z0 = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
        z0[bins.real] = z0[bins.real].real
        z0 = _rescale(bins, z0, problem.gamma2)
        W, trace, ub, iters = _frank_wolfe(problem, bins, z0, max_iters, gain_tol,
                                           stall_iters, gap_tol, certify=certify)
        relaxed = trace[-1]
        groups = [list(_extract(bins, W, problem.gamma2))]
        if refine and polish and p > 1:
            W_pol = _refine_lifted(problem, bins, W)
            pol = _lifted_value(problem, bins, W_pol)
            if pol > relaxed:
                relaxed = pol
                trace.append(pol)
                groups.append(list(_extract(bins, W_pol, problem.gamma2)))
        candidates = [z for g in groups for z in g]
        if refine:
            # local ascent from the best extraction of each lifted iterate
            candidates += [_refine(problem, bins, max(g, key=value)) for g in groups]
        z = max(candidates, key=value)
        f = value(z)
        result = DesignResult(
            input=_to_input(bins, z, p, problem.gamma2),
            objective=f,
            iterations=iters,
            trace=trace,
            relaxed_objective=relaxed,
            upper_bound=max(ub, relaxed, f),
            truncation_loss=max(0.0, relaxed - f),
            stalled=f <= _lam_min(past) + 1e-12 * max(1.0, abs(f)),
        )
        if best is None or result.objective > best.objective:
            best = result
    return best


def single_frequency_optimum(problem: DesignProblem) -> float:
    """Brute-force best input using one conjugate pair and one direction.

    Exact optimum when d = 1; a lower bound otherwise.
    """
    bins = _bins(problem)
    best = -math.inf
    for b in range(len(bins.ells)):
        # maximize lambda_min(past + Tbar g2 Re(G q q^H G^H)) over unit q: for d = 1
        # this is |G q|^2 maximized by the top right-singular vector
        _, _, Vh = np.linalg.svd(bins.G[b])
        q = Vh[0].conj()
        if bins.real[b]:
            q = q.real / np.linalg.norm(q.real)
        z = np.zeros((len(bins.ells), problem.p), dtype=complex)
        z[b] = q * math.sqrt(problem.gamma2 / bins.weight[b])
        best = max(best, _lam_min(problem.past_cov + problem.horizon_weight * _response(bins, z)))
    return best


# ---------------------------------------------------------------------------
# direction set and frequency gating


@dataclass(frozen=True)
class DirectionEllipsoid:
    """Unit directions w with w^T Q w <= c.

    ``c`` is the best value found for its defining minimization over the
    sphere (an upper estimate, so the set errs on the large side);
    ``c_lower`` is a certified lower bound on that minimum.
    """

    Q: np.ndarray
    c: float
    c_lower: float
    eligible: tuple

    def contains(self, w, tol: float = 1e-12) -> bool:
        w = np.asarray(w, dtype=float)
        w = w / np.linalg.norm(w)
        return float(w @ self.Q @ w) <= self.c + tol * max(1.0, abs(self.c))

    def max_quadratic(self, R) -> float:
        """max w^T R w over the set, through its exact one-parameter dual
        min_{b >= 0} lambda_max(R - b Q) + b c."""
        R = 0.5 * (np.asarray(R, dtype=float) + np.asarray(R, dtype=float).T)
        Q, c = self.Q, self.c

        def g(b):
            return float(np.linalg.eigvalsh(R - b * Q)[-1]) + b * c

        def slope(b):
            v = np.linalg.eigh(R - b * Q)[1][:, -1]
            return c - float(v @ Q @ v)

        if slope(0.0) >= 0:
            return g(0.0)
        hi = max(1.0, float(np.max(np.abs(R)))) / max(float(np.max(np.abs(Q))), 1e-300)
        for _ in range(200):
            if slope(hi) >= 0:
                break
            hi *= 2
        res = minimize_scalar(g, bounds=(0.0, hi), method="bounded", options={"xatol": 1e-12 * hi})
        return min(g(float(res.x)), g(0.0), g(hi))


def _frequency_norms(A, B, k):
    th = thetas(k)
    R = resolvent(A, th)  # (k, d, d)
    GB = np.einsum("lde,ep->ldp", R, np.asarray(B, dtype=float).reshape(A.shape[0], -1))
    r_norm = np.linalg.norm(R, 2, axis=(1, 2))
    g_norm2 = np.linalg.norm(GB, 2, axis=(1, 2)) ** 2
    return R, GB, r_norm, g_norm2


def _min_max_quadratics(P, rng, starts):
    """min over the unit sphere of max_l w^T P_l w (value, lower bound)."""
    d = P.shape[1]

    def phi(w):
        w = w / np.linalg.norm(w)
        return float(np.max(np.einsum("d,lde,e->l", w, P, w)))

    def smooth(w, tau):
        nw = np.linalg.norm(w)
        v = w / nw
        qv = np.einsum("d,lde,e->l", v, P, v)
        m = qv.max()
        e = np.exp((qv - m) / tau)
        pi = e / e.sum()
        val = m + tau * math.log(e.sum())
        gv = 2 * np.einsum("l,lde,e->d", pi, P, v)
        g = (gv - (gv @ v) * v) / nw
        return val, g

    scale = max(float(np.max(np.abs(P))), 1e-300)
    best_w, best = None, math.inf
    for w0 in list(starts) + [rng.standard_normal(d) for _ in range(3)]:
        w = np.asarray(w0, dtype=float)
        for tau in (1e-2, 1e-4, 1e-6):
            res = minimize(smooth, w, args=(tau * scale,), jac=True, method="L-BFGS-B",
                           options={"maxiter": 200})
            w = res.x / np.linalg.norm(res.x)
        for cand in (w, np.asarray(w0, dtype=float)):
            v = phi(cand)
            if v < best:
                best_w, best = cand / np.linalg.norm(cand), v
    # certified lower bound from the soft-max weights at the best point
    qv = np.einsum("d,lde,e->l", best_w, P, best_w)
    e = np.exp((qv - qv.max()) / (1e-6 * scale))
    lower = float(np.linalg.eigvalsh(np.einsum("l,lde->de", e / e.sum(), P))[0])
    return best, min(lower, best)


def direction_set(A_hat, B, traj_cov, k: int, gamma2: float, eps: float, T: int, T0: int,
                  seed=0):
    """Directions that may carry the minimum eigenvalue.

    Q = k^2/(2T+T0) * traj_cov and c = min_{w'} [w'^T Q w' + (4/3) gamma2
    max_{eligible l} ||w'^T G_l||^2], where l is eligible when
    eps <= 1 / (4 ||(e^{j theta_l} I - A)^{-1}||). Returns None when no
    frequency is eligible.
    """
    A = np.atleast_2d(np.asarray(A_hat, dtype=float))
    _, GB, r_norm, _ = _frequency_norms(A, B, k)
    ok = eps <= 1.0 / (4.0 * r_norm)
    if not ok.any():
        return None
    Q = (k**2 / (2 * T + T0)) * np.asarray(traj_cov, dtype=float)
    Q = 0.5 * (Q + Q.T)
    Gk = GB[ok]
    P = Q[None] + (4.0 / 3.0) * gamma2 * np.einsum("ldp,lep->lde", Gk, Gk.conj()).real
    rng = stream(seed, "direction_set")
    lamQ, VQ = np.linalg.eigh(Q)
    starts = [VQ[:, 0]]
    for idx in np.argsort([np.linalg.eigvalsh(Pl)[0] for Pl in P])[:3]:
        starts.append(np.linalg.eigh(P[idx])[1][:, 0])
    c, c_lower = _min_max_quadratics(P, rng, starts)
    eligible = tuple(int(l) for l in np.flatnonzero(ok) + 1)
    return DirectionEllipsoid(Q=Q, c=float(c), c_lower=float(c_lower), eligible=eligible)


@dataclass(frozen=True)
class Eligibility:
    support: tuple
    all_frequencies: bool
    ellipsoid: DirectionEllipsoid | None
    per_frequency: np.ndarray  # the gated quantity for each l = 1..k


def eligible_frequencies(A_hat, B, traj_cov, k: int, gamma2: float, eps: float, T: int,
                         T0: int, seed=0, opt_kwargs=None) -> Eligibility:
    """Frequencies the estimate is accurate enough to plan with.

    First the all-frequency test (against the optimal design value with
    every frequency allowed), then the per-frequency fallback (against
    lambda_min(traj_cov)).
    """
    A = np.atleast_2d(np.asarray(A_hat, dtype=float))
    traj_cov = np.asarray(traj_cov, dtype=float)
    R, _, r_norm, g_norm2 = _frequency_norms(A, B, k)
    ok = eps <= 1.0 / (4.0 * r_norm)
    all_k = tuple(range(1, k + 1))
    if eps == 0:
        return Eligibility(all_k, True, None, np.zeros(k))
    ell = direction_set(A, B, traj_cov, k, gamma2, eps, T, T0, seed)
    if ell is None:
        return Eligibility((), False, None, np.full(k, np.inf))
    Tn = 2 * T + T0
    quad = np.array([ell.max_quadratic(np.einsum("de,fe->df", Rl, Rl.conj()).real) for Rl in R])
    q = (32.0 / 3.0) * eps * Tn * gamma2 * quad * g_norm2 / r_norm
    lam_traj = float(np.linalg.eigvalsh(traj_cov)[0])
    if ok.all():
        qmax = float(np.max(q))
        passes = qmax <= lam_traj
        if not passes:
            problem = DesignProblem(A, B, gamma2 / 2, k, traj_cov, horizon_weight=Tn)
            passes = qmax <= opt_input(problem, seed=seed, **(opt_kwargs or {})).objective
        if passes:
            return Eligibility(all_k, True, ell, q)
    sel = ok & (q <= lam_traj)
    return Eligibility(tuple(int(l) for l in np.flatnonzero(sel) + 1), False, ell, q)


# ---------------------------------------------------------------------------
# input update


@dataclass
class InputUpdate:
    input: PeriodicInput
    sigma_u2: float
    support: tuple
    design: DesignResult | None
    fallback: str | None = None  # reason for a noise-only update


def build_problem(A_hat, B, traj_cov, gamma2, k, mode, T, T0, sigma2, sigma_u2, support):
    """The design problem the input update passes to the optimizer."""
    A = np.atleast_2d(np.asarray(A_hat, dtype=float))
    p = np.asarray(B).reshape(A.shape[0], -1).shape[1]
    budget = gamma2 - p * sigma_u2
    Tn = 2 * T + T0
    if mode == "asymptotic":
        past = Tn * sigma2 * gram_noise(A, k)
    else:
        past = np.asarray(traj_cov, dtype=float)
    return DesignProblem(A, B, budget, k, past, horizon_weight=Tn, support=support)


def update_inputs(A_hat, B, traj_cov, gamma2: float, k: int, eps: float, mode: str = "greedy",
                  T: int = 0, T0: int = 100, sigma2: float = 1.0, sigma_u2: float | None = None,
                  seed=0, opt_kwargs=None) -> InputUpdate:
    """Design the next epoch's periodic input.

    ``mode`` is "ft" (plan against the observed covariates), "asymptotic"
    (plan against the predicted noise covariates (2T+T0) sigma2 Gamma_k(A_hat))
    or "greedy" (ft with every frequency allowed and no gating). The
    sinusoid gets budget gamma2 - p * sigma_u2 and is played for 2T+T0 steps.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    A = np.atleast_2d(np.asarray(A_hat, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    p = B.shape[1]
    opt_kwargs = opt_kwargs or {}

    def noise_only(reason):
        return InputUpdate(PeriodicInput.zeros(p, k, gamma2), gamma2 / p, (), None, reason)

    if not np.all(np.isfinite(A)) or spectral_radius(A) >= 1:
        return noise_only("unstable estimate")
    if not math.isfinite(eps):
        return noise_only("no confidence radius")
    sigma_u2 = gamma2 / (2 * p) if sigma_u2 is None else float(sigma_u2)
    if gamma2 - p * sigma_u2 <= 0:
        return InputUpdate(PeriodicInput.zeros(p, k, gamma2), sigma_u2, (), None, "no sinusoid budget")
    if mode == "greedy":
        support = tuple(range(1, k + 1))
    else:
        gate = eligible_frequencies(A, B, traj_cov, k, gamma2, eps, T, T0, seed, opt_kwargs)
        support = gate.support
        if not support:
            return noise_only("no frequencies eligible")
    try:
        problem = build_problem(A, B, traj_cov, gamma2, k, mode, T, T0, sigma2, sigma_u2, support)
        design = opt_input(problem, seed=seed, **opt_kwargs)
    except FeasibilityError:
        return noise_only("no frequencies eligible")
    return InputUpdate(design.input, sigma_u2, support, design, None)


# ---------------------------------------------------------------------------
# colored-noise baseline


@dataclass
class NoiseCovResult:
    cov: np.ndarray
    objective: float
    upper_bound: float
    iterations: int

    @property
    def gap(self) -> float:
        return self.upper_bound - self.objective


def _noise_maps(A, B, K):
    P = matrix_powers(A, K)
    return np.einsum("sde,ep->sdp", P, np.asarray(B, dtype=float).reshape(A.shape[0], -1))


def noise_objective(A, B, cov, gamma2_unused=None, sigma2: float = 0.0, K: int | None = None) -> float:
    """lambda_min(sigma^2 Gamma_K + sum_{s<K} A^s B cov B^T (A^s)^T)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    K = truncation_horizon(A) if K is None else K
    AB = _noise_maps(A, B, K)
    M = sigma2 * gram_noise(A, K) + np.einsum("sdp,pq,seq->de", AB, cov, AB)
    return _lam_min(M)


def optimal_noise_cov(A, B, gamma2: float, sigma2: float = 0.0, K: int | None = None,
                      max_iters: int = 5000, gap_tol: float = 1e-6, cert_every: int = 100,
                      stall_iters: int = 300) -> NoiseCovResult:
    """Best Gaussian input covariance under Tr(cov) <= gamma2.

    Frank-Wolfe over the trace ball: the linear step is gamma2 q q^T with q
    the top eigenvector of the adjoint map applied to the (soft-min)
    supergradient. Stops once the certified duality gap drops below
    ``gap_tol * gamma2``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    require_stable(A)
    K = truncation_horizon(A) if K is None else K
    AB = _noise_maps(A, B, K)
    p = AB.shape[2]
    d = A.shape[0]
    base = sigma2 * gram_noise(A, K)

    def phi_map(C):
        return np.einsum("sdp,pq,seq->de", AB, C, AB)

    def top_fn(S):
        adj = np.einsum("sdp,de,seq->pq", AB, S, AB)
        al, av = np.linalg.eigh(0.5 * (adj + adj.T))
        BV = np.einsum("sdp,pi->sid", AB, av)
        return al, np.einsum("sid,sie->ide", BV, BV)

    cov = np.eye(p) * gamma2 / p
    Y = phi_map(cov)
    lam, V = np.linalg.eigh(base + Y)
    best_f, best_cov = float(lam[0]), cov.copy()
    trace = [best_f]
    ub = math.inf
    mu_rel = 5e-2
    log_d = math.log(d + 1)
    it = 0
    for it in range(1, max_iters + 1):
        scale = max(float(np.max(np.abs(lam))), 1e-300)
        mu = mu_rel * scale
        S = _softmin_weights(lam, V, mu)
        adj = np.einsum("sdp,de,seq->pq", AB, S, AB)
        al, av = np.linalg.eigh(0.5 * (adj + adj.T))
        ub = min(ub, float(np.trace(S @ base)) + gamma2 * float(al[-1]))
        if ub - best_f >= gap_tol * gamma2 and it % cert_every == 0:
            ub = min(ub, _certify(S, base, gamma2, top_fn))
        if ub - best_f < gap_tol * gamma2:
            break
        fw_gap = gamma2 * float(al[-1]) - float(np.sum(S * Y))
        if fw_gap < mu * log_d and mu_rel > 1e-9:
            mu_rel *= 0.5
            continue
        qv = av[:, -1]
        atom_cov = gamma2 * np.outer(qv, qv)
        step = phi_map(atom_cov) - Y
        s, _ = _line_search(lambda s: _smooth_min(base + Y + s * step, mu), 2.0 / (2.0 + it))
        if s > 0:
            cov = (1 - s) * cov + s * atom_cov
            Y = Y + s * step
            lam, V = np.linalg.eigh(base + Y)
            if lam[0] > best_f:
                best_f, best_cov = float(lam[0]), cov.copy()
        else:
            mu_rel = max(mu_rel * 0.5, 1e-9)
        trace.append(best_f)
        if len(trace) > stall_iters and trace[-1] - trace[-1 - stall_iters] < 1e-12 * gamma2:
            break
    S = _softmin_weights(lam, V, mu_rel * max(float(np.max(np.abs(lam))), 1e-300))
    if ub - best_f >= gap_tol * gamma2:
        ub = min(ub, _certify(S, base, gamma2, top_fn))
    return NoiseCovResult(cov=0.5 * (best_cov + best_cov.T), objective=best_f,
                          upper_bound=float(ub), iterations=it)


def diagonal_noise_closed_form(lams, gamma2: float, K: int) -> float:
    """gamma2 / sum_i (1 - l_i^2)/(1 - l_i^{2K}) for A = diag(l), B = I, sigma = 0."""
    lams = np.asarray(lams, dtype=float)
    terms = np.where(np.abs(lams) > 0, (1 - lams**2) / (1 - lams ** (2 * K)), 1.0)
    return float(gamma2 / np.sum(terms))


# ---------------------------------------------------------------------------
# perturbation quantities and bounds


def _support_mask(k, support):
    mask = np.zeros(k, bool)
    if support is None:
        mask[:] = True
    else:
        mask[np.asarray(sorted(support), dtype=int) - 1] = True
    return mask


def hk_quadratic(A, B, inp: PeriodicInput, support, w) -> float:
    """w^T H_k(A, B, U, support) w with H_k = sum_l G_l U_l U_l^H G_l^H."""
    mask = _support_mask(inp.k, support)
    G = transfer(A, B, thetas(inp.k)[mask])
    y = np.einsum("d,ldp,pl->l", np.asarray(w, dtype=float), G, inp.U[:, mask])
    return float(np.sum(np.abs(y) ** 2))


def hk_directional_derivative(A, B, inp: PeriodicInput, support, w, Delta) -> float:
    """Derivative of w^T H_k(A + s Delta) w at s = 0:
    2 sum_l Re[w^T R_l Delta R_l B U_l U_l^H B^H R_l^H w], R_l = (e^{j theta_l} I - A)^{-1}."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    w = np.asarray(w, dtype=float)
    mask = _support_mask(inp.k, support)
    R = resolvent(A, thetas(inp.k)[mask])
    x = np.einsum("lde,ep,pl->ld", R, B, inp.U[:, mask])  # R_l B U_l
    wR = np.einsum("d,lde->le", w, R)  # w^T R_l
    left = np.einsum("le,ef,lf->l", wR, np.asarray(Delta, dtype=float), x)
    right = np.einsum("ld,d->l", x.conj(), w)
    return float(2 * np.sum((left * right).real))


def lower_bound_design(A, B, sigma2: float, gamma2: float, K: int | None = None, k: int = 256,
                       allow_dc: bool = True, seed=0, **opt_kwargs) -> DesignResult:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    K = truncation_horizon(A) if K is None else K
    problem = DesignProblem(A, B, gamma2, k, sigma2 * gram_noise(A, K), horizon_weight=1.0,
                            zero_mean=not allow_dc)
    return opt_input(problem, seed=seed, **opt_kwargs)


def lower_bound_rate(A, B, sigma2: float, gamma2: float, K: int | None = None, k: int = 256,
                     allow_dc: bool = True, seed=0, **opt_kwargs) -> float:
    """max_u lambda_min(sigma^2 Gamma_K + gamma^2 Gamma_K^u) over period-k inputs.

    The quantity in the denominator of the lower bound on sample complexity;
    see :func:`sample_complexity_lower_bound`.
    """
    return lower_bound_design(A, B, sigma2, gamma2, K, k, allow_dc, seed, **opt_kwargs).objective


def sample_complexity_lower_bound(rate: float, sigma2: float, eps: float, delta: float) -> float:
    """(sigma^2 eps^-2 / 8) / rate * log(1 / (2.4 delta))."""
    return sigma2 / (8 * eps**2) / rate * math.log(1 / (2.4 * delta))


def epsilon_s(A_hat, B, gamma2: float, k: int, traj_cov, T_i: int, T: int, T0: int,
              seed=0, opt_kwargs=None) -> float:
    """Accuracy level at which every frequency becomes plannable (reporting only)."""
    A = np.atleast_2d(np.asarray(A_hat, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    R, _, r_norm, _ = _frequency_norms(A, B, k)
    ell = direction_set(A, B, traj_cov, k, gamma2, 0.0, T, T0, seed)
    problem = DesignProblem(A, B, gamma2 / 2, k, np.asarray(traj_cov, dtype=float),
                            horizon_weight=2 * T + T0)
    value = opt_input(problem, seed=seed, **(opt_kwargs or {})).objective
    quad = np.array([ell.max_quadratic(np.einsum("de,fe->df", Rl, Rl.conj()).real) for Rl in R])
    denom = float(np.max(quad * r_norm)) * np.linalg.norm(B, 2) ** 2
    first = 27.0 / (256.0 * T_i * gamma2) * value / denom
    return float(min(first, 1.0 / (5 * np.max(r_norm))))
