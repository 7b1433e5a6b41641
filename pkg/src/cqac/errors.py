"""Exception types raised by the numerical routines."""

from __future__ import annotations


class CqacError(Exception):
    """Base class for numerical failures in this package."""


class ConvergenceError(CqacError):
    """An iteration did not reach its tolerance.

    ``iterate`` holds the last (or best) iterate and ``residual`` its residual
    norm, so callers can inspect or reuse partial work.
    """

    def __init__(self, message, iterate=None, residual=float("nan"), history=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual
        self.history = list(history) if history is not None else []


class StallError(CqacError):
    """Continuation step size fell below the minimum; ``branch`` is the partial result."""

    def __init__(self, message, branch=None):
        super().__init__(message)
        self.branch = branch


class SingularityError(CqacError):
    """A null direction could not be isolated at a singular point."""


class InstabilityError(CqacError):
    """The linearization is not Hurwitz, so no stationary covariance exists."""


class StepSizeError(CqacError):
    """Explicit time stepping is unstable for the requested step."""


class DivergenceError(CqacError):
    def __init__(self, message, time=float("nan")):
        super().__init__(message)
        self.time = time


class ConditioningError(CqacError):
    """A covariance matrix is singular or indefinite."""
