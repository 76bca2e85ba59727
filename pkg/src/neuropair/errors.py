"""Exception types shared across the package.

Each class maps to a stable machine-readable code and CLI exit code so
batch callers can branch on failure kind without parsing prose.
"""


class NeuropairError(Exception):
    """Base class for all package errors."""

    code = "E_RUNTIME"
    exit_code = 1


class InputError(NeuropairError):
    """Invalid argument values: bad lengths, empty inputs, out-of-range knobs."""

    code = "E_INPUT"
    exit_code = 2


class ShapeError(InputError):
    """Array dimensions incompatible with the requested operation."""

    code = "E_SHAPE"
    exit_code = 3


class FormatError(NeuropairError):
    """Malformed file content. Carries the byte offset where parsing failed."""

    code = "E_FORMAT"
    exit_code = 4

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(NeuropairError):
    """Non-finite values where finite ones are required (NaN loss, inf gradient)."""

    code = "E_NUMERIC"
    exit_code = 5
