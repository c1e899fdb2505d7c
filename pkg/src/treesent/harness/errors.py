"""Error kinds shared by the harness and mapped to CLI exit codes."""


class DataError(ValueError):
    """Malformed or unusable input data (exit code 2)."""


class NumericError(ArithmeticError):
    """Non-finite loss or parameters during training (exit code 3)."""
