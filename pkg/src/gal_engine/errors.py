"""Exception hierarchy shared across the package."""

from __future__ import annotations


class GalError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(GalError):
    """Vector dimensions are incompatible for the requested operation."""


class DegenerateVectorError(GalError):
    """A vector has zero (or non-finite) norm and cannot be normalized."""


class TemplateError(GalError):
    """A prompt template is missing its placeholder or repeats it."""


class EmptyBatchError(GalError):
    """An operation that requires at least one element got none."""


class DomainError(GalError):
    """A scalar argument is outside its documented domain."""


class ValidationError(GalError):
    """Externally supplied data references unknown ids or breaks limits."""


class ConfigError(GalError):
    """A run configuration is internally inconsistent or incomplete."""


class StateError(GalError):
    """An operation is not valid in the run's current status."""


class DegenerateWeightError(GalError):
    """Admission weight collapsed to zero; the round admits nothing."""


class BackendError(GalError):
    """A generation/embedding/fine-tuning provider failed.

    Carries retry metadata so callers can decide whether to retry the
    whole round.
    """

    def __init__(self, message: str, *, status: int | None = None,
                 attempts: int = 1, body: str | None = None):
        super().__init__(message)
        self.status = status
        self.attempts = attempts
        self.body = body


class ProtocolError(GalError):
    """A wire-protocol response violated the documented schema."""


class PersistenceError(GalError):
    """Run state on disk is missing, truncated, or inconsistent.

    ``path`` names the offending file.
    """

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message if path is None else f"{message}: {path}")
        self.path = path


class LockError(GalError):
    """Another live engine instance owns the run directory."""
