"""Error hierarchy for the MCML toolkit.

Input-side errors map to CLI exit code 2, estimation-side errors to exit code 3.
"""

from typing import List, Optional


class MCMLError(Exception):
    """Base class for every error raised by the toolkit."""


class InputError(MCMLError):
    """Bad data, bad configuration or a request the model cannot serve."""


class EstimationError(MCMLError):
    """The numerics failed on otherwise valid input."""


# ============================================================================
# INPUT ERRORS
# ============================================================================

class DomainError(InputError, ValueError):
    """A response or covariate lies outside the model's domain."""


class DimensionError(InputError, ValueError):
    """A parameter or statistic vector has the wrong length."""


class ParseError(InputError):
    """A dataset or config file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(InputError):
    """An option value is out of range."""


class InsufficientDataError(InputError):
    """Too few observations or draws for an empirical covariance."""


class NoOracleError(InputError):
    """The model has no enumerable support, so no exact oracle exists."""


class DominationError(InputError):
    """The instrumental density vanishes somewhere on the model support."""


# ============================================================================
# ESTIMATION ERRORS
# ============================================================================

class NonConvergenceError(EstimationError):
    """The Newton iterations hit max_iter or the line search stalled."""

    def __init__(self, message: str, trace: Optional[List] = None):
        self.trace = list(trace or [])
        super().__init__(message)


class DegenerateDataError(EstimationError):
    """The data put the maximiser at infinity (e.g. all toy responses equal)."""

    def __init__(self, message: str, trace: Optional[List] = None):
        self.trace = list(trace or [])
        super().__init__(message)


class NumericalUnderflowError(EstimationError):
    """All importance weights vanished."""


class SingularHessianError(EstimationError):
    """The plug-in D matrix cannot be inverted."""


class SingularCovarianceError(EstimationError):
    """V/n + W/m is not positive definite above the eigenvalue floor."""
