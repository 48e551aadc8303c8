"""Exception hierarchy shared by every module."""


class BatchQError(Exception):
    """Base class for all package errors."""


class DomainError(BatchQError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ModelError(BatchQError, ValueError):
    """A model description is malformed or violates an invariant.

    ``field`` names the offending schema path (e.g. ``"batch.pmf"``).
    """

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
        self.reason = message


class UnsupportedAnalyticError(BatchQError):
    """No closed-form path exists for this model; use the simulation oracle."""


class ConvergenceError(BatchQError, ArithmeticError):
    """Adaptive quadrature hit its subdivision limit.

    The best available estimate and its error estimate are attached.
    """

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class ResourceError(BatchQError):
    """A computation would exceed a configured size cap."""
