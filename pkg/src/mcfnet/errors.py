"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors -> 1, data errors -> 2,
numeric failures -> 3. In-memory contract violations (bad shapes, values out
of range) raise plain ValueError.
"""


class McfnetError(Exception):
    """Base class for package-specific errors."""


class UsageError(McfnetError):
    """Bad command line, unknown flags, malformed config file."""


class DataError(McfnetError):
    """Missing files, unpaired stems, unreadable or mismatched images."""


class CheckpointError(DataError):
    """Corrupt, truncated, version-mismatched or shape-mismatched checkpoint."""


class NumericError(McfnetError):
    """Non-finite loss or other numeric failure during training."""
