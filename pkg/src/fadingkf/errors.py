class FadingKFError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(FadingKFError, ValueError):
    pass


class DomainError(FadingKFError, ValueError):
    """Argument outside the range where the quantity is defined."""


class NumericError(FadingKFError, ArithmeticError):
    pass


class NonConvergenceError(NumericError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class UnobservableError(FadingKFError, ValueError):
    pass


class PairingError(FadingKFError, ValueError):
    """A verdict and an empirical report do not describe the same experiment."""
