"""Exception types raised across the package."""


class SpectralKernelError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(SpectralKernelError, ValueError):
    pass


class SingularityError(SpectralKernelError, ValueError):
    """Density requested at a point where it is infinite."""


class NonIntegrableTailError(SpectralKernelError):
    """The tail exponent does not exceed one."""


class UnachievableToleranceError(SpectralKernelError):
    """Requested tolerance is below what double precision can certify."""


class ModelEvaluationError(SpectralKernelError):
    """The density returned a non-finite value."""

    def __init__(self, message, omega=None):
        super().__init__(message)
        self.omega = omega


class RefinementError(SpectralKernelError):
    """Dyadic refinement ran out of depth on some interval."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class ConvergenceError(SpectralKernelError):
    """Panel budget exhausted before every distance retired."""

    def __init__(self, message, distances=None, estimates=None):
        super().__init__(message)
        self.distances = distances
        self.estimates = estimates


class NotPositiveDefiniteError(SpectralKernelError, ValueError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class PoleError(SpectralKernelError, ValueError):
    """A gamma factor sits on one of its poles."""


class PrecisionEscalation(SpectralKernelError):
    """High-precision evaluation lost too many bits to cancellation."""


class DivergentError(SpectralKernelError, ValueError):
    pass


class UseBoundInstead(SpectralKernelError):
    """Argument too small for the asymptotic tail formula."""
