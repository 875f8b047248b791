"""Exception hierarchy shared by every module."""


class NSFDEError(Exception):
    """Base class for all library errors."""


class DimensionError(NSFDEError, ValueError):
    """Measure weights and segment values have incompatible shapes."""


class SupportError(NSFDEError, ValueError):
    """A term reaches outside the segment horizon [-tau, 0]."""


class CertificationError(NSFDEError):
    """A structural hypothesis (non-atomicity, sign, mass) does not hold."""

    def __init__(self, message, offending=()):
        super().__init__(message)
        self.offending = tuple(offending)


class SelectionError(CertificationError):
    """No admissible Picard interval length exists for the given parameters."""


class DivergenceError(NSFDEError):
    """Picard iteration failed to contract within ``max_iter`` sweeps."""

    def __init__(self, message, sup_diffs=None, residuals=None):
        super().__init__(message)
        self.sup_diffs = sup_diffs
        self.residuals = residuals


class IllPosedError(NSFDEError, ValueError):
    """Volterra kernel has instantaneous mass >= 1."""


class HypothesisError(NSFDEError, ValueError):
    """Input to a comparison does not satisfy the required inequality."""


class InsufficientDataError(NSFDEError, ValueError):
    """Too few iterations, paths or samples for a statistic."""


class NoRootError(NSFDEError):
    """A characteristic equation has no root in the admissible range."""


class DegenerateError(NSFDEError):
    """Every candidate certificate degenerated."""


class RateUndefinedError(NSFDEError, ValueError):
    """Logarithmic rate requested on non-positive data."""


class InapplicableError(NSFDEError, ValueError):
    """A witness was requested outside the regime where it applies."""


class ConfigError(NSFDEError, ValueError):
    """Experiment configuration failed validation."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class SchemaError(NSFDEError, ValueError):
    """CSV input lacks required columns or rows."""
