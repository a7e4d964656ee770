"""Exception hierarchy shared by all modules."""


class InfillGPError(Exception):
    """Base class for package errors."""


class ValidationError(InfillGPError, ValueError):
    """Invalid model, design, dataset or configuration."""


class DomainError(InfillGPError, ValueError):
    """Argument outside the domain of a special function."""


class AccuracyError(InfillGPError, ArithmeticError):
    """Quadrature did not reach the requested tolerance.

    The best available estimate and its error bound are attached.
    """

    def __init__(self, message, estimate=float("nan"), error=float("nan")):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class UnsupportedOperationError(InfillGPError, NotImplementedError):
    """Operation not available for the given covariance family."""


class NumericalError(InfillGPError, ArithmeticError):
    """Matrix factorization failed; ``diagnostics`` holds condition information."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class InfeasibleEstimationError(InfillGPError, ValueError):
    """Quadratic-variation configuration leaves an empty index set."""


class SingularDesignError(InfillGPError, ArithmeticError):
    """Moment system for the differencing constants is rank deficient."""


class MixingError(InfillGPError, RuntimeError):
    """Metropolis chain accepted nothing over a whole burn-in window."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class IngestionError(InfillGPError, ValueError):
    """Gridded CSV input does not form a complete rectangular grid."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)
