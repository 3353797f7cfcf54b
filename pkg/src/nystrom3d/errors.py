"""Exception types raised across the package."""


class NystromError(Exception):
    """Base class for all package errors."""


class ParameterError(NystromError, ValueError):
    """An argument is outside its admissible range."""


class DomainError(NystromError, ValueError):
    """A point lies outside the domain of the requested map."""


class NotInOverlapError(DomainError):
    """A transition map was requested at a point outside the chart overlap."""


class SingularityError(NystromError, ZeroDivisionError):
    """A singular kernel was evaluated at coincident points."""


class NumericalError(NystromError, ArithmeticError):
    """An inner iteration (e.g. Newton) failed to converge."""


class SolverError(NystromError, RuntimeError):
    """The linear solver did not reach the requested tolerance.

    Attributes
    ----------
    residuals : list of float
        Relative residual history recorded during the iteration.
    """

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class ResourceError(NystromError, MemoryError):
    """A requested dense materialization exceeds the configured cap."""


class OracleError(NystromError, RuntimeError):
    """A reference computation failed to reach its tolerance."""


class ConfigError(NystromError, ValueError):
    """An experiment configuration is malformed or violates an invariant."""


class ProximityError(DomainError):
    """An evaluation point is too close to the surface for the plain trapezoidal rule."""
