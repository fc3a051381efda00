"""Exception types shared across the package."""


class SentikitError(Exception):
    """Base class for all package-specific errors."""


class DataError(SentikitError):
    """Bad input data: missing files, unknown columns or labels, bad schemas."""


class ConfigError(SentikitError):
    """Invalid configuration: unknown keys, out-of-range values, bad flags."""


class NumericError(SentikitError):
    """Non-finite values during training (divergence, overflow)."""


class ArchiveError(SentikitError):
    """Corrupt, truncated, or incompatible binary container files."""
