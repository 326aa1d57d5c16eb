"""Exception types shared across the package."""


class BisbmError(Exception):
    pass


class InvalidParameterError(BisbmError, ValueError):
    """A parameter is outside its documented domain."""


class DimensionMismatchError(InvalidParameterError):
    """Array lengths disagree with the declared model sizes."""


class NoSignalError(BisbmError, ValueError):
    """The planting function is uniform: no nonzero Fourier coefficient exists."""


class SizeGuardError(InvalidParameterError):
    """A requested simulation would exceed the expected-size guard."""


class ConvergenceError(BisbmError, RuntimeError):
    """An iterative solve did not reach the requested residual.

    Carries the best residuals seen so the caller can report partial progress.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class DegenerateSpectrumError(ConvergenceError):
    """The spectrum carries no usable signal (zero or indistinct eigenvalues)."""
