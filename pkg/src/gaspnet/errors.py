"""Exception hierarchy shared across the package.

The CLI maps these onto its exit codes: ConfigError -> 2,
MissingInputError -> 3, NumericalError -> 4. Format errors raised while
parsing source files are subclasses of DataFormatError so callers can
catch the family or the specific failure.
"""


class GaspnetError(Exception):
    """Base class for all package errors."""


class ConfigError(GaspnetError):
    """Invalid configuration (unknown keys, bad values, bad CLI usage)."""


class MissingInputError(GaspnetError):
    """A required input file/directory does not exist."""


class NumericalError(GaspnetError):
    """A non-finite value appeared where the contract forbids it."""


class DataFormatError(GaspnetError):
    """Base class for source-file format violations."""


class BadMagicError(DataFormatError):
    """IDX input does not start with a valid magic number."""


class TruncatedPayloadError(DataFormatError):
    """Payload is shorter than the declared dimensions require."""


class DimensionMismatchError(DataFormatError):
    """Payload length disagrees with the declared dimensions (too long)."""


class RecordFormatError(DataFormatError):
    """CIFAR-10 batch length is not a whole number of 3073-byte records."""


class LabelRangeError(DataFormatError):
    """A label byte is outside the valid class range."""
