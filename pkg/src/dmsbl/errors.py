"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 1,
NumericError -> 2, file/format problems -> 3.
"""


class ConfigError(ValueError):
    """Bad configuration key, value, or inconsistent dimensions."""


class NumericError(RuntimeError):
    """Non-finite values or a numerically unusable linear system."""


class FormatError(IOError):
    """Malformed binary signal or weight file."""
