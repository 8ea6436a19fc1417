"""Exception types raised across the package."""


class LilLabError(Exception):
    """Base class for all package errors."""


class KindMismatchError(LilLabError, TypeError):
    """A state, observable or measure was used with the wrong model kind."""


class ValidationError(LilLabError, ValueError):
    """An input violated a documented precondition."""


class DegenerateVarianceError(LilLabError, ValueError):
    """The asymptotic variance is zero (or numerically indistinguishable from it)."""

    def __init__(self, message="degenerate variance"):
        super().__init__(message)
