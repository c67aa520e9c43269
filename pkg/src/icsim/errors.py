"""Exception hierarchy shared by every icsim module."""

from __future__ import annotations


class IcsimError(Exception):
    """Base class for all icsim errors."""


class InvalidInstanceError(IcsimError, ValueError):
    pass


class ConfigError(IcsimError, ValueError):
    pass


class DomainError(IcsimError, ValueError):
    """A formula was asked to evaluate outside its stated domain."""


class NumericalError(IcsimError, ArithmeticError):
    """Base for failures that map to CLI exit code 3."""


class NotStronglyConvexError(NumericalError):
    pass


class AmbiguousOptimumError(NumericalError):
    pass


class SingularityError(NumericalError):
    def __init__(self, message: str, eigenvalue: float | None = None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class DivergenceError(NumericalError):
    def __init__(self, message: str, round_index: int):
        super().__init__(message)
        self.round_index = round_index


class CoverageError(IcsimError, ValueError):
    pass


class InfeasibleError(IcsimError, ValueError):
    pass
