"""Exception hierarchy shared across the package.

CLI exit-code mapping: ArgumentError and usage problems exit 2, data errors
(storage, format, corruption, validation) exit 3, everything else exits 4.
"""


class ShelmError(Exception):
    """Base class for all package errors."""


class ArgumentError(ShelmError, ValueError):
    """Invalid argument or configuration value."""


class StateError(ShelmError, RuntimeError):
    """Operation called in an invalid state (e.g. step after done)."""


class StorageError(ShelmError, OSError):
    """I/O failure while reading or writing an artifact file."""


class FormatError(ShelmError):
    """File does not conform to the expected binary format."""


class CorruptionError(ShelmError):
    """File parses structurally but its payload is damaged."""


class TokenLookupError(ShelmError, KeyError):
    """Token not present in the vocabulary or embedding table."""


class DegenerateInputError(ShelmError):
    """Numerically degenerate input (zero-norm query, cancelled embedding)."""


class MappingError(ShelmError):
    """Retrieved token cannot be mapped into the requested embedding space."""


class CalibrationError(ShelmError):
    """Statistics calibration failed (e.g. zero-variance dimension)."""


class TraceError(ShelmError):
    """Episode trace file is malformed or violates trace invariants."""
