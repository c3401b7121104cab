"""Exception types shared across the package."""


class RvfError(Exception):
    """Base class for all package errors."""


class ShapeError(RvfError):
    """Array dimensions do not match what an operation requires."""


class ConfigError(RvfError):
    """A configuration value is out of its allowed range."""


class NumericError(RvfError):
    """A non-finite value appeared where finite math was required."""


class UsageError(RvfError):
    """An API was called with inconsistent or stale arguments."""


class FormatError(RvfError):
    """A serialized file is corrupt or truncated.

    ``offset`` is the byte position at which decoding failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
