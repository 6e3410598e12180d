"""Exception hierarchy shared across gridkick modules."""


class GridkickError(Exception):
    """Base class for all gridkick errors."""


class ValidationError(GridkickError):
    """An input object violates its documented invariants."""


class ConfigError(GridkickError):
    """A configuration value is out of range or inconsistent."""


class DimensionError(ValidationError):
    """Array shapes do not line up."""


class DomainError(ValidationError):
    """A scalar parameter is outside its mathematical domain."""


class EnumerationCapError(GridkickError):
    """An exhaustive enumeration would exceed the configured cap."""


class ContractError(GridkickError):
    """A caller violated a documented precondition."""


class PhaseError(GridkickError):
    """An operation was invoked in the wrong lifecycle phase."""


class UnknownSkillError(GridkickError, KeyError):
    """A skill id is not present in the pool."""


class MappingError(GridkickError):
    """A coordinate could not be mapped onto the target grid."""


class IngestionError(ValidationError):
    """A record file contains malformed rows; carries line numbers."""

    def __init__(self, message: str, lines: list[int] | None = None):
        super().__init__(message)
        self.lines = lines or []


class CheckpointError(GridkickError):
    """A checkpoint file is missing, corrupt, or incompatible."""
