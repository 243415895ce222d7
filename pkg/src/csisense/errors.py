"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration."""


class DataError(Exception):
    """Dataset content violates what an operation requires."""


class NumericalError(Exception):
    """A numerical computation produced non-finite values."""


class DegenerateInputError(ValueError):
    """Input is degenerate for the requested operation (e.g. zero vector)."""


class ShapeError(ValueError):
    """Array shapes are incompatible with the declared model/layer."""


class OutOfRangeError(ValueError):
    """Query timestamps fall outside the labelled time range."""


class CaezFileError(Exception):
    """Base class for CAEZ-lite container errors."""


class FormatError(CaezFileError):
    """The file does not look like a CAEZ-lite container."""


class VersionError(CaezFileError):
    """The container declares an unsupported format version."""


class CorruptionError(CaezFileError):
    """The container payload is truncated or inconsistent."""
