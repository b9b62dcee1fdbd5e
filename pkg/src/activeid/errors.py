"""Exception types raised across the toolkit."""


class ActiveIDError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(ActiveIDError, ValueError):
    pass


class StabilityError(ActiveIDError):
    """Raised when an operation needs spectral_radius(A) < 1."""


class SingularError(ActiveIDError, ArithmeticError):
    pass


class NormalizationError(ActiveIDError, ArithmeticError):
    """Raised when a zero-power input is normalized by its power."""


class FeasibilityError(ActiveIDError, ValueError):
    """Raised for inputs violating the design constraints.

    ``violations`` lists the names of the constraints that failed.
    """

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = tuple(violations)


class RankError(ActiveIDError, ArithmeticError):
    """Raised when the least-squares covariates are rank deficient.

    ``subspace`` holds an orthonormal basis (columns) of the deficient
    directions; ``block`` names the regressor block they live in
    (``"x"``, ``"u"`` or ``"xu"``).
    """

    def __init__(self, message, subspace=None, block="x"):
        super().__init__(message)
        self.subspace = subspace
        self.block = block


class ConfigError(ActiveIDError, ValueError):
    pass
