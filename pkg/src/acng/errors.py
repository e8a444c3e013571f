"""Exception types; each maps onto one CLI exit code."""


class AcngError(Exception):
    exit_code = 1


class UsageError(AcngError, ValueError):
    """Bad arguments or violated parameter invariants."""

    exit_code = 1


class DataFormatError(AcngError, ValueError):
    """Malformed input files or invalid data (non-finite values, duplicates)."""

    exit_code = 2

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConstructionError(AcngError, RuntimeError):
    exit_code = 1


class PreconditionError(AcngError, ValueError):
    """A verification routine was called outside its hypothesis."""

    exit_code = 1


class VerificationError(AcngError):
    exit_code = 3
