"""Exception hierarchy shared across the package."""


class LabelPoolError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(LabelPoolError):
    """Rejected input: dimension mismatch, non-finite values, bad arguments."""


class NumericError(LabelPoolError):
    """Numerical failure: diverged training, degenerate (zero-norm) vectors."""


class StorageError(LabelPoolError):
    """Base class for file-format errors."""


class BadMagicError(StorageError):
    """File does not start with the expected magic bytes."""

    def __init__(self, expected: bytes, found: bytes):
        super().__init__(f"bad magic: expected {expected!r}, found {found!r}")
        self.expected = expected
        self.found = found


class VersionMismatchError(StorageError):
    """File format version is not supported by this reader."""

    def __init__(self, expected: int, found: int):
        super().__init__(f"unsupported format version: expected {expected}, found {found}")
        self.expected = expected
        self.found = found


class TruncatedFileError(StorageError):
    """File ended before the declared payload was fully read."""


class FormatError(StorageError):
    """Structurally broken file: count mismatch, trailing bytes, bad payload."""
