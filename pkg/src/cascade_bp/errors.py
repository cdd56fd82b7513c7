"""Exception types raised across the package."""


class CascadeError(Exception):
    """Base class for package-specific errors."""


class SchemaError(CascadeError, ValueError):
    """An input document or argument does not match the expected layout."""


class IsolatedNodeError(SchemaError):
    """The network contains a component with a single node."""


class InconsistentEvidence(CascadeError):
    """The observation has zero probability under the model.

    ``where`` names the factor, message or table that collapsed to zero.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class NoConvergence(CascadeError):
    """Message passing failed to converge for every attempted discount."""

    def __init__(self, message, attempts=()):
        super().__init__(message)
        self.attempts = list(attempts)


class EnumerationBudgetExceeded(CascadeError):
    """Exact enumeration would exceed the configured term budget."""


class StrengthBudgetExceeded(CascadeError):
    """A factor's local domain is too large for exhaustive strength maximisation."""
