"""Exception hierarchy shared across the package."""


class SafeHJBError(Exception):
    """Base class for all library errors."""


class ConfigError(SafeHJBError, ValueError):
    """Malformed or inconsistent problem configuration."""


class NonSPDError(SafeHJBError, ValueError):
    """A matrix required to be symmetric positive definite is not."""


class NotPSDError(SafeHJBError, ValueError):
    """A matrix required to be positive semi-definite has a negative eigenvalue."""


class DegenerateHOCBFError(SafeHJBError):
    """The barrier constraint row vanishes where the constraint matters.

    ``L_g L_f^{k-1} h(x) = 0`` inside the active region violates the
    relative-degree assumption, so no control can influence the constraint.
    """


class InfeasibleFilterError(DegenerateHOCBFError):
    """Min-norm filtering is infeasible: no control restores the constraint."""


class SingularSystemError(SafeHJBError):
    """The Galerkin system matrix is singular or numerically unusable."""


class DivergedError(SafeHJBError):
    """The successive-approximation iteration left any reasonable range."""


class NotStabilizableError(SafeHJBError):
    """No stabilizing Riccati solution exists for the given (A, B) pair."""


class NonFiniteError(SafeHJBError):
    """A NaN or infinity appeared during numerical integration."""


class UnsafeStartError(SafeHJBError, ValueError):
    """A safety-aware simulation was started outside the safe set."""
