"""Exception taxonomy shared across the package."""


class HiforgeError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(HiforgeError, ValueError):
    """Invalid configuration value or inconsistent option combination."""


class DataError(HiforgeError, ValueError):
    """Malformed or out-of-contract input data (files, series, labels)."""


class DimensionError(HiforgeError, ValueError):
    """Shape mismatch between tensors or series; messages name the axes."""


class NumericalError(HiforgeError, ArithmeticError):
    """NaN or Inf produced by an operation, or a numerically impossible request."""


class UsageError(HiforgeError, RuntimeError):
    """API misuse, e.g. backward on a non-scalar or decoding without state."""
