"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (bad key, dimension mismatch, ...)."""


class DataError(ValueError):
    """Corrupt or unreadable data artifact (corpus file, checkpoint, ...)."""


class NumericError(ArithmeticError):
    """Non-finite values encountered during computation."""
