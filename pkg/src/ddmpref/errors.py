"""Exception types raised across the package."""


class DomainError(ValueError):
    """Argument outside the domain of a closed-form quantity (e.g. t <= 0)."""


class LaplaceUnderflowError(ArithmeticError):
    """Empirical Laplace transform underflowed to zero."""


class ConfigurationError(ValueError):
    """Invalid simulator or experiment configuration."""


class SingularityError(ValueError):
    """Design matrix is singular and no ridge was requested."""

    def __init__(self, message, dimension=None):
        super().__init__(message)
        self.dimension = dimension


class SeparationError(ValueError):
    """Choices are perfectly separated; the unpenalized MLE does not exist."""


class OptimizationError(RuntimeError):
    """Iterative solver failed to reach its tolerance."""

    def __init__(self, message, grad_norm=None):
        super().__init__(message)
        self.grad_norm = grad_norm


class SchemaError(ValueError):
    """Input table is missing required columns."""


class RowErrorLimit(ValueError):
    """Too many malformed rows while parsing an input table."""

    def __init__(self, message, row_errors=()):
        super().__init__(message)
        self.row_errors = list(row_errors)


class EmptyTargetError(ValueError):
    """Every subject was dropped while computing the subject-level target."""


class SeriesFallbackWarning(RuntimeWarning):
    """Weight evaluated through its small-time asymptote because t underflowed."""
