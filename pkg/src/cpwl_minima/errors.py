"""Exception hierarchy shared across the package."""


class CpwlError(Exception):
    """Base class for all package errors."""


class ValidationError(CpwlError, ValueError):
    """Input data violates an invariant (non-finite values, empty dataset, ...)."""


class FormatError(CpwlError, ValueError):
    """A file does not follow the expected layout."""


class ParseError(CpwlError, ValueError):
    """A row or token could not be parsed."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ArgumentError(CpwlError, ValueError):
    """An argument is outside the accepted domain."""


class DegenerateBoundaryError(ArgumentError):
    """A partition boundary coincides with a sample."""


class CannotRefineError(CpwlError):
    """The requested region cannot be split further."""


class ShapeError(CpwlError, ValueError):
    """Dimensions of a network and its inputs disagree."""


class ConfigError(CpwlError):
    """Build configuration cannot realize the predictor (e.g. bias too small)."""


class ConsistencyError(CpwlError):
    """The max-min form does not reproduce the region-wise pieces on the samples."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class MarginError(CpwlError):
    """A sample sits on an activation boundary, so patterns cannot be certified."""

    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index


class NumericalError(CpwlError, ArithmeticError):
    """A non-finite value appeared during an iterative computation."""


class UnsupportedConstructionError(CpwlError):
    """The requested architecture is evaluable but not constructible."""


class CombinatorialExplosionError(CpwlError):
    """Enumeration would exceed the configured budget."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate
