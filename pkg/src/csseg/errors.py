"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericsError -> 4.
"""


class ConfigError(ValueError):
    """Invalid run configuration (unknown key, bad value, bad scenario)."""


class DataError(ValueError):
    """Invalid or corrupt dataset / file content."""


class NumericsError(ArithmeticError):
    """Numerical failure (non-finite loss, invalid operand domain)."""


class ShapeMismatchError(ValueError):
    """Operands with incompatible shapes; the message names both."""
