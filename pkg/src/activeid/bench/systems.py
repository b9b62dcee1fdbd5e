"""Seeded generators for the benchmark system families."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.stats import ortho_group

from ..errors import ConfigError
from ..lds import LinSys, spectral_radius
from ..rng import seed_key, stream

KINDS = ("jordan", "unitary_diag", "random_stable", "block_diag", "explicit")
B_KINDS = ("identity", "random", "explicit")


@dataclass(frozen=True)
class SystemSpec:
    """Recipe for a test system.

    kind:
      jordan         single Jordan block of size ``d`` with eigenvalue ``rho``
      unitary_diag   V diag(eigenvalues) V^T with V a seeded random rotation
      random_stable  Gaussian d x d matrix rescaled to spectral radius ``rho``
      block_diag     direct sum of ``blocks``
      explicit       the matrix ``A``
    b_kind: identity (needs p = d), random (Gaussian d x p) or explicit ``B``.
    """

    kind: str
    d: int | None = None
    rho: float | None = None
    eigenvalues: tuple | None = None
    blocks: tuple = ()
    A: tuple | None = None
    p: int | None = None
    b_kind: str = "identity"
    B: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown system kind {self.kind!r}; expected one of {KINDS}")
        if self.b_kind not in B_KINDS:
            raise ConfigError(f"unknown B kind {self.b_kind!r}; expected one of {B_KINDS}")
        if self.kind in ("jordan", "random_stable"):
            if self.d is None or self.d < 1:
                raise ConfigError(f"{self.kind} needs d >= 1")
            if self.rho is None or not 0 <= self.rho < 1:
                raise ConfigError(f"{self.kind} needs 0 <= rho < 1, got {self.rho}")
        if self.kind == "unitary_diag":
            if not self.eigenvalues:
                raise ConfigError("unitary_diag needs eigenvalues")
            if max(abs(float(v)) for v in self.eigenvalues) >= 1:
                raise ConfigError("unitary_diag eigenvalues must lie in (-1, 1)")
        if self.kind == "block_diag" and not self.blocks:
            raise ConfigError("block_diag needs at least one block")
        if self.kind == "explicit" and self.A is None:
            raise ConfigError("explicit system needs A")
        if self.b_kind == "explicit" and self.B is None:
            raise ConfigError("explicit B needs B")

    @classmethod
    def from_dict(cls, obj: dict) -> "SystemSpec":
        obj = dict(obj)
        if "blocks" in obj:
            obj["blocks"] = tuple(cls.from_dict(b) for b in obj["blocks"])
        for key in ("eigenvalues",):
            if key in obj:
                obj[key] = tuple(float(v) for v in obj[key])
        for key in ("A", "B"):
            if key in obj and obj[key] is not None:
                obj[key] = tuple(tuple(float(v) for v in row) for row in obj[key])
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown system keys: {sorted(extra)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for name in ("d", "rho", "eigenvalues", "A", "p", "B"):
            val = getattr(self, name)
            if val is not None:
                out[name] = [list(r) for r in val] if name in ("A", "B") else (
                    list(val) if name == "eigenvalues" else val)
        if self.blocks:
            out["blocks"] = [b.to_dict() for b in self.blocks]
        out["b_kind"] = self.b_kind
        out["seed"] = self.seed
        return out


def _gen_A(spec: SystemSpec, seed) -> np.ndarray:
    if spec.kind == "jordan":
        # eigenvalue rho with multiplicity d, so the spectral radius is rho exactly
        return spec.rho * np.eye(spec.d) + np.eye(spec.d, k=1)
    if spec.kind == "unitary_diag":
        lam = np.asarray(spec.eigenvalues, dtype=float)
        d = len(lam)
        if d == 1:
            return lam.reshape(1, 1)
        V = ortho_group.rvs(d, random_state=stream(seed, spec.seed, "unitary_diag"))
        return (V * lam) @ V.T
    if spec.kind == "random_stable":
        G = stream(seed, spec.seed, "random_stable").standard_normal((spec.d, spec.d))
        r = spectral_radius(G)
        return G * (spec.rho / r) if r > 0 else G
    if spec.kind == "block_diag":
        parts = [_gen_A(b, (*seed_key(seed), i)) for i, b in enumerate(spec.blocks)]
        return scipy.linalg.block_diag(*parts)
    return np.array(spec.A, dtype=float)


def _target_radius(spec: SystemSpec, A) -> float | None:
    if spec.kind in ("jordan", "random_stable"):
        return spec.rho
    if spec.kind == "unitary_diag":
        return max(abs(float(v)) for v in spec.eigenvalues)
    if spec.kind == "block_diag":
        rs = [_target_radius(b, None) for b in spec.blocks]
        return None if any(r is None for r in rs) else max(rs)
    return None


def gen_system(spec: SystemSpec, seed=0) -> LinSys:
    """Build the system described by ``spec`` (random parts seeded by ``seed``)."""
    A = _gen_A(spec, seed)
    d = A.shape[0]
    if spec.b_kind == "identity":
        p = d if spec.p is None else spec.p
        if p != d:
            raise ConfigError("identity B needs p = d")
        B = np.eye(d)
    elif spec.b_kind == "random":
        p = d if spec.p is None else spec.p
        B = stream(seed, spec.seed, "B").standard_normal((d, p)) / np.sqrt(p)
    else:
        B = np.array(spec.B, dtype=float)
        if B.shape[0] != d:
            raise ConfigError(f"B has {B.shape[0]} rows, A is {d}x{d}")
    target = _target_radius(spec, A)
    if spec.kind != "jordan" and target is not None and spectral_radius(A) > target + 1e-9:
        raise ConfigError("generated system exceeds its target spectral radius")
    if spec.kind == "explicit" and spectral_radius(A) >= 1:
        raise ConfigError("explicit A is not stable")
    return LinSys(A, B)
