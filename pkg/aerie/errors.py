"""Exception hierarchy for Aerie."""

from typing import Optional


class AerieError(Exception):
    """Base class for every error raised by the aerie package."""

    kind = "error"


class ConfigurationError(AerieError, ValueError):
    """A configuration value is missing, unknown or out of range."""

    kind = "config"

    def __init__(self, message: str, field_path: Optional[str] = None):
        self.field_path = field_path
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message)


class UsageError(AerieError, ValueError):
    """An API was called with arguments that do not fit the object."""

    kind = "usage"


class DomainError(AerieError, ValueError):
    """A physical quantity is outside the domain of a formula."""

    kind = "domain"


class DegenerateGeometryError(DomainError):
    """Transmitter and receiver coincide."""

    kind = "geometry"


class DataError(AerieError, ValueError):
    """Input data is not usable (for example non-finite values)."""

    kind = "data"


class NumericError(AerieError, ArithmeticError):
    """A numerical procedure failed to produce a result."""

    kind = "numeric"


class TrainingDivergedError(NumericError):
    """Loss or gradient became non-finite during training."""

    kind = "diverged"

    def __init__(self, message: str, **context):
        self.context = context
        if context:
            details = ", ".join(f"{k}={v}" for k, v in sorted(context.items()))
            message = f"{message} ({details})"
        super().__init__(message)


class CheckpointError(AerieError):
    """A checkpoint cannot be read or does not match the configuration."""

    kind = "checkpoint"
