"""Exception and warning types raised across the package."""


class AhrsError(Exception):
    """Base class for all errors raised by :mod:`invahrs`."""


class ConfigError(AhrsError, ValueError):
    """Invalid configuration value (noise matrices, references, step, ...)."""


class NonFiniteState(AhrsError, ArithmeticError):
    """A filter or integrator produced a NaN/inf state component."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class NoConvergence(AhrsError, RuntimeError):
    """The Riccati fixed-point iteration did not reach the tolerance."""

    def __init__(self, max_iter, residual):
        super().__init__(
            f"DARE iteration did not converge in {max_iter} iterations "
            f"(last residual {residual:.3e})"
        )
        self.max_iter = max_iter
        self.residual = residual


class SingularInnovation(AhrsError, ArithmeticError):
    """Innovation covariance C P C^T + R is not positive definite."""


class SingularN(AhrsError, ArithmeticError):
    """Projected measurement covariance N R N^T is not positive definite."""


class MissingGains(AhrsError, ValueError):
    pass


class InvalidGains(AhrsError, ValueError):
    pass


class IndexOutOfRange(AhrsError, IndexError):
    pass


class DegenerateGeometry(AhrsError, ValueError):
    """The two vector observations are (anti)parallel."""


class EmptyWindow(AhrsError, ValueError):
    pass


class LogFormatError(AhrsError, ValueError):
    """Malformed row in a CSV sensor log."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class GimbalLockWarning(RuntimeWarning):
    """Euler extraction hit the pitch = +-90 deg singularity (roll set to 0)."""
