"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage errors -> 1, data errors -> 2,
numeric failures -> 3.
"""


class KgnpError(Exception):
    """Base class for all package errors."""


class UsageError(KgnpError):
    """Bad command line, bad config key, bad argument combination."""


class DataError(KgnpError):
    """Malformed or inconsistent input data (files, graphs, tasks)."""


class ShapeError(KgnpError):
    """Tensor shape mismatch; always a programming bug at the call site."""


class NumericError(KgnpError):
    """Non-finite values where finite ones are required."""
