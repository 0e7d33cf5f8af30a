"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, numerical failures with 3, and I/O problems with 4.
"""


class NsbError(Exception):
    """Base class for package-specific errors."""


class ConfigError(NsbError, ValueError):
    """Invalid or inconsistent configuration, input shape, or precondition."""


class NumericalError(NsbError, RuntimeError):
    """A computation produced non-finite or otherwise unusable values."""


class BlowupError(NumericalError):
    """The forward solve exceeded the configured norm cap."""


class StorageError(NsbError, OSError):
    """A file was missing, malformed, or could not be written."""
