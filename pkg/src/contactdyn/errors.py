"""Exception types raised across the package."""

from __future__ import annotations


class ContactDynError(Exception):
    """Base class for all package errors."""


class ExpressionError(ContactDynError, ValueError):
    """A Hamiltonian expression could not be parsed.

    ``offset`` is the byte offset into the UTF-8 encoded source.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.message = message
        self.offset = offset


class ExpressionSyntaxError(ExpressionError):
    pass


class UnknownIdentifierError(ExpressionError):
    def __init__(self, message: str, offset: int, name: str):
        super().__init__(message, offset)
        self.name = name


class ExponentError(ExpressionError):
    pass


class DimensionError(ContactDynError, ValueError):
    pass


class DerivativeOrderError(ContactDynError, ValueError):
    pass


class NoConvergenceError(ContactDynError, RuntimeError):
    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class SingularJacobianError(ContactDynError, RuntimeError):
    """The augmented equilibrium system is singular at the current iterate.

    Expected at degenerate equilibria; continuation handles those.
    """

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


class CorankError(ContactDynError, ValueError):
    """A matrix does not have the corank an operation requires."""

    def __init__(self, message: str, corank: int):
        super().__init__(message)
        self.corank = corank


class NotInvariantError(ContactDynError, ValueError):
    pass


class ConfigError(ContactDynError, ValueError):
    pass
