"""Exception hierarchy shared by every module."""

from __future__ import annotations


class RodeoError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(RodeoError, ValueError):
    """Malformed or out-of-range input."""


class HermiticityError(ValidationError):
    pass


class DimensionError(ValidationError):
    pass


class DegenerateBranchError(RodeoError):
    """A forced measurement branch has zero probability."""


class UnderflowError(RodeoError):
    """Joint success probability fell below the representable floor."""


class AmbiguousTargetError(RodeoError):
    def __init__(self, message: str, competitors=()):
        super().__init__(message)
        self.competitors = tuple(competitors)


class SearchFailedError(RodeoError):
    def __init__(self, message: str, history=()):
        super().__init__(message)
        self.history = list(history)


class ConvergenceError(RodeoError):
    pass
