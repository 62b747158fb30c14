"""Exception hierarchy shared by every module."""

from __future__ import annotations


class ScreeningError(Exception):
    """Base class for all errors raised by the package."""


class DimensionMismatch(ScreeningError, ValueError):
    pass


class ParallelClassifiers(ScreeningError, ValueError):
    pass


class NotNormalized(ScreeningError, ValueError):
    pass


class InfeasibleRegion(ScreeningError):
    """The conjunction accept region is empty (or has empty interior)."""


class SolverDidNotConverge(ScreeningError):
    """Raised when the smoothed solver exhausts its budget.

    Carries the best iterate found and the residuals at that point so callers
    can decide whether the answer is still usable.
    """

    def __init__(self, message, best_iterate=None, objective=None, residuals=None):
        super().__init__(message)
        self.best_iterate = best_iterate
        self.objective = objective
        self.residuals = residuals or {}


class PlanInfeasible(ScreeningError, ValueError):
    pass


class GridSpecError(ScreeningError, ValueError):
    pass


class AgentEvaluationError(ScreeningError):
    """Wraps a per-agent failure with the index of the offending agent."""

    def __init__(self, index, cause):
        super().__init__(f"agent {index}: {cause}")
        self.index = index
        self.cause = cause


class ScenarioError(ScreeningError, ValueError):
    """Scenario validation failure with a stable diagnostic code.

    ``code`` is one of ``ParseError``, ``DimensionMismatch``, ``InvalidEnum``,
    ``NonPDMatrix``, ``UnknownField``, ``MissingField``, ``InvalidValue``.
    """

    def __init__(self, code, field, message):
        super().__init__(f"[{code}] {field}: {message}")
        self.code = code
        self.field = field
