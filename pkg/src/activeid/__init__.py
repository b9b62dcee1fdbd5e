"""Active identification of linear dynamical systems with periodic inputs."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ActiveIDError,
    ConfigError,
    DimensionError,
    FeasibilityError,
    NormalizationError,
    RankError,
    SingularError,
    StabilityError,
)
from .freq import PeriodicInput, gamma_k_u, gamma_k_u_tilde, transfer  # noqa: E402
from .lds import LinSys, NoiseModel, StableLinSys, Trajectory, simulate  # noqa: E402
