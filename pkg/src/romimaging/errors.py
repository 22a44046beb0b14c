"""Exception hierarchy shared by all modules."""


class RomImagingError(Exception):
    """Base class for package errors."""


class ValidationError(RomImagingError, ValueError):
    """Invalid input: bad shapes, units, parameters or file contents."""


class NumericalError(RomImagingError, ArithmeticError):
    """A numerical stage failed (instability, loss of definiteness, NaN)."""


class StabilityError(NumericalError):
    """The time-stepping stability condition is violated."""

    def __init__(self, message, lam_max=None):
        super().__init__(message)
        self.lam_max = lam_max


class BlockCholeskyError(NumericalError):
    """A Schur complement in the block Cholesky sweep is not positive definite."""

    def __init__(self, message, block):
        super().__init__(message)
        self.block = block


class RegularizationError(NumericalError):
    """The regularization parameter exceeded its cap."""
