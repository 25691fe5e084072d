"""Exception hierarchy shared by every module."""


class PolyKTError(Exception):
    """Base class for all library errors."""


class DomainError(PolyKTError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class InfeasibleConstraintError(PolyKTError, ValueError):
    """A constraint set is empty or has zero Dirichlet measure."""


class IntegrationError(PolyKTError, RuntimeError):
    """A numerical integration backend failed to deliver a trustworthy value."""


class ConvergenceError(PolyKTError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class EnumerationLimitError(PolyKTError, ValueError):
    """A type-class enumeration would exceed the configured guard."""


class CodecError(PolyKTError, ValueError):
    """A compressed stream is malformed or does not match its configuration."""
