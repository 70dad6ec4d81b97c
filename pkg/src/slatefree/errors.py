"""Exception types raised across the package."""


class SlateFreeError(Exception):
    """Base class for all package errors."""


class ConfigError(SlateFreeError, ValueError):
    """Invalid configuration: bad parameter ranges, duplicate ids, unknown keys."""


class DomainError(SlateFreeError, ValueError):
    """Argument outside the domain of a combinatorial operation."""


class CapacityError(SlateFreeError, RuntimeError):
    """Instance too large for full slate enumeration."""


class UndefinedMarginalError(SlateFreeError, ValueError):
    """A per-item marginal was requested for an item with zero frequency."""


class CsvFormatError(SlateFreeError, ValueError):
    """Malformed learning-curve CSV."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
