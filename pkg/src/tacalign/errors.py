"""Exception types shared across the toolkit."""


class TacalignError(Exception):
    """Base class for all toolkit-specific errors."""


class UnsupportedShapeError(TacalignError, ValueError):
    """Raised when a primitive's shape kind is not one of the known categories."""


class NoContactError(TacalignError, ValueError):
    """Raised when an operation requires an active contact region and none exists."""


class OutOfRangeError(TacalignError, ValueError):
    """Raised when a scalar or coordinate falls outside its documented domain."""


class InvalidClassError(TacalignError, ValueError):
    """Raised when a class word does not belong to the target dimension's vocabulary."""


class DescriptionParseError(TacalignError, ValueError):
    """Raised when text matches neither the description template nor any prompt template."""


class FormatError(TacalignError, ValueError):
    """Raised on bad magic bytes, truncation, or header/payload mismatch in binary files."""


class DataError(TacalignError, ValueError):
    """Raised when dataset contents are inconsistent (missing ids, bad splits, ...)."""


class DegenerateDataError(DataError):
    """Raised when a data split cannot support the requested operation (e.g. one class)."""
