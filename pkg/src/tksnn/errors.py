"""Exception hierarchy shared across the library."""


class TksnnError(Exception):
    """Base class for all library errors."""


class DimensionError(TksnnError):
    """Operand shapes are incompatible."""


class ParameterError(TksnnError):
    """A hyperparameter or argument is outside its valid range."""


class ContractError(TksnnError):
    """A caller violated an API contract (wrong state, wrong call order)."""


class TapeError(TksnnError):
    """Gradient tape misuse: re-running backward, or missing provenance."""


class DataError(TksnnError):
    """Dataset contents are invalid (bad labels, out-of-bounds events)."""


class FormatError(TksnnError):
    """A file does not conform to its binary/text format."""


class ConfigError(TksnnError):
    """A run configuration is invalid or references unknown keys."""


class TrainingAbort(TksnnError):
    """Training stopped on a non-finite loss."""
