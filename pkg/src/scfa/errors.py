"""Exception hierarchy shared by all modules."""


class ScfaError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(ScfaError, ValueError):
    """Inconsistent or unsupported configuration."""


class InvalidGeometryError(ScfaError, ValueError):
    pass


class InvalidParameterError(ScfaError, ValueError):
    pass


class DecompositionError(ScfaError, ArithmeticError):
    """A factorization failed (matrix not positive definite, singular, ...)."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class NumericError(ScfaError, ArithmeticError):
    pass


class InsufficientDataError(ScfaError, ValueError):
    pass


class RegimeError(ScfaError, ValueError):
    """Input size outside the brute-force regime an algorithm supports."""


class InitializationError(ScfaError, RuntimeError):
    pass


class DegenerateReferenceError(ScfaError, ArithmeticError):
    pass


class CoverageError(ScfaError, ValueError):
    """Required data (weights, estimates) missing for part of the domain."""


class SceneError(ScfaError, ValueError):
    pass


class SolveError(ScfaError, RuntimeError):
    """Wraps a failure of one (segment, bin) problem with its location."""

    def __init__(self, message, segment=None, bin=None):
        super().__init__(message)
        self.segment = segment
        self.bin = bin


class DegenerateVectorError(ScfaError, ValueError):
    pass


class InsufficientActivityError(InsufficientDataError):
    pass
