"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3.
"""


class ActionRCError(Exception):
    """Base class for all package errors."""


class ConfigError(ActionRCError):
    """Bad configuration: unknown key, out-of-range value, malformed override."""


class DataError(ActionRCError):
    """Bad or missing input data (manifests, frames, caches)."""


class ManifestError(DataError):
    """Malformed manifest file or record; message names the offending row."""


class UnrecoverableGapError(DataError):
    """A (subject, action, scenario) cell has no repetition to copy from."""


class CacheError(DataError):
    """Cache file missing, corrupt, or produced by a different configuration."""


class NumericError(ActionRCError):
    """Numerical failure: singular system, non-finite values, degenerate data."""
