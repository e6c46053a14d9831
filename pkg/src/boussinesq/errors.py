"""Exception types raised across the package."""


class BoussinesqError(Exception):
    """Base class for all package errors."""


class GridError(BoussinesqError, ValueError):
    pass


class SideMismatch(BoussinesqError, ValueError):
    """A field was on the wrong side (physical/spectral) for the operation."""


class NotElliptic(BoussinesqError, ValueError):
    """The coefficient matrix of L is not positive definite."""


class NonFiniteError(BoussinesqError, FloatingPointError):
    """Non-finite values appeared; ``where`` says which time index or mode."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class MaxItersExceeded(BoussinesqError, RuntimeError):
    """Picard iteration did not reach tolerance.

    ``history`` holds the successive-difference norms, ``ratios`` their
    quotients; ratios near or above one mean the window is too long.
    """

    def __init__(self, message, history=(), ratios=()):
        super().__init__(message)
        self.history = list(history)
        self.ratios = list(ratios)


class ConfigError(BoussinesqError, ValueError):
    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line
