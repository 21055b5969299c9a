"""Exception types shared across the package.

The CLI maps these onto exit codes: UsageError -> 2, DataError -> 3,
anything else -> 4.
"""


class UsageError(ValueError):
    """A caller violated an operation's precondition (bad arguments)."""


class DataError(RuntimeError):
    """An input file or dataset is malformed beyond recovery."""
