"""Exception types shared across the package."""
from .autograd import ContractError, DimensionError


class ConfigError(ValueError):
    """Invalid configuration key or value."""


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(ArithmeticError):
    """Non-finite loss or failed gradient check."""


__all__ = ["ConfigError", "ContractError", "DataError", "DimensionError", "NumericalError"]
