"""Exception hierarchy shared by the simulator, the agent and the run driver."""
from __future__ import annotations


class StarRisError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgumentError(StarRisError, ValueError):
    pass


class ConfigError(InvalidArgumentError):
    """Configuration problem; the message starts with the dotted field path."""

    def __init__(self, field: str, problem: str) -> None:
        super().__init__(f"{field}: {problem}")
        self.field = field
        self.problem = problem


class InvalidStateError(StarRisError, RuntimeError):
    pass


class NumericError(StarRisError, ArithmeticError):
    pass


class NumericOverflowError(NumericError):
    pass


class DegenerateElementError(NumericError):
    """Both zone entries of a STAR-RIS element are zero."""

    def __init__(self, elements: list[int]) -> None:
        super().__init__(f"degenerate STAR-RIS elements: {elements}")
        self.elements = elements


class InsufficientDataError(StarRisError, LookupError):
    pass


class BudgetExceededError(StarRisError, RuntimeError):
    pass
