"""Exception types shared across the package."""


class NldoeError(Exception):
    """Base class for all package errors."""


class EvaluationError(NldoeError, ValueError):
    """A model or expression could not be evaluated at the given inputs."""


class DomainError(EvaluationError):
    """An operation was applied outside its mathematical domain."""

    def __init__(self, message, operation=None, operand=None):
        super().__init__(message)
        self.operation = operation
        self.operand = operand


class SingularDesignError(NldoeError):
    """The information matrix of a design is singular."""


class SearchError(NldoeError):
    """A design search could not produce a result."""
