"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: ConfigError -> 1,
DataError (and plain IO failures) -> 2, NumericError -> 3.
"""


class ConfigError(ValueError):
    """Invalid configuration value or unusable command line."""


class DataError(Exception):
    """Dataset file missing, malformed, or inconsistent with its manifest."""


class NumericError(ArithmeticError):
    """A computation produced NaN/Inf or was evaluated at a non-finite point."""


class ShapeError(ValueError):
    """Operand dimensions do not match the declared contract."""


class UsageError(RuntimeError):
    """API misuse, e.g. backpropagating through an already-consumed tape."""
