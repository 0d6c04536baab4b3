"""Exception types shared across the trainer.

The CLI maps these onto process exit codes: ConfigError -> 1,
NumericError -> 2, file/format problems -> 3.
"""


class ConfigError(ValueError):
    """Bad configuration value or an unusable dataset."""


class NumericError(RuntimeError):
    """Training diverged (non-finite loss)."""


class FormatError(IOError):
    """Malformed binary signal or weight file."""
