"""Exception types raised across the package."""

from __future__ import annotations


class SwarmOptError(Exception):
    """Base class for all package errors."""


class DomainError(SwarmOptError, ValueError):
    """An argument lies outside the domain of a function."""


class NotIrreducible(SwarmOptError, ValueError):
    """The rate graph is not strongly connected."""


class NotReversible(SwarmOptError, ValueError):
    """Detailed balance fails beyond tolerance."""


class BadMeasure(SwarmOptError, ValueError):
    """A reference measure is not a positive probability vector."""


class NotMinimizer(SwarmOptError, ValueError):
    """A supplied density does not satisfy the first-order condition."""


class NoBracket(SwarmOptError, RuntimeError):
    """A root could not be bracketed."""


class NonFinite(SwarmOptError, ArithmeticError):
    """A numerical result is not finite."""


class StepFailure(SwarmOptError, RuntimeError):
    """The integrator could not keep the state interior."""


class WindowTooShort(SwarmOptError, ValueError):
    """A fitting window spans too few decades."""


class ParseError(SwarmOptError, ValueError):
    """A configuration file could not be parsed."""


class ValidationError(SwarmOptError, ValueError):
    """A configuration field holds an invalid value."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
