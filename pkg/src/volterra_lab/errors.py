"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument violates an operation's mathematical preconditions."""


class NumericError(RuntimeError):
    """A numerical routine failed to reach its target accuracy.

    Carries the tolerance actually achieved, when known.
    """

    def __init__(self, message: str, achieved_tol: float | None = None):
        super().__init__(message)
        self.achieved_tol = achieved_tol


class FactorizationError(NumericError):
    """Covariance factorization failed even after diagonal jitter."""


class UnsupportedSchemeError(DomainError):
    """Operation requires a different path-generation scheme."""


class InsufficientDataError(DomainError):
    """Too few usable points for a regression."""


class InsufficientSignalError(DomainError):
    """Input is degenerate (e.g. identically zero lag profile)."""


class ConfigError(ValueError):
    """Configuration validation failure; message carries the field path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
