"""Exception hierarchy shared by the realization modules."""


class RealizerError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(RealizerError, ValueError):
    """Shapes or lengths are incompatible with the requested operation."""


class NumericalFailure(RealizerError, ArithmeticError):
    """A numerical kernel failed to converge or produced non-finite output."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class RankError(NumericalFailure):
    """A matrix that must have full rank is (numerically) rank deficient."""


class IllConditionedError(NumericalFailure):
    """The OLS normal equations are singular to working precision."""

    def __init__(self, message, sigma=None):
        super().__init__(message)
        self.sigma = sigma


class InsolubleTLSError(NumericalFailure):
    """The TLS gap between the relevant singular values is too small."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class NongenericTLSError(NumericalFailure):
    """The TLS singular vector has a (near) zero last entry."""


class WeightingSingularError(NumericalFailure):
    """The WLS weighting matrix cannot be formed."""


class InstabilityError(RealizerError, ValueError):
    """An operation that requires a stable system received an unstable one."""


class SamplingError(RealizerError, RuntimeError):
    """Rejection sampling ran out of draws."""


class DegenerateReferenceError(RealizerError, ValueError):
    """The reference impulse response is constant, so FIT is undefined."""
