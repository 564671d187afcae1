"""Health indicator construction for run-to-failure sensor data.

Pipeline: window-wise RMS features, kernel change-point staging, stage
synchronized mini-batch sampling, and a dual-branch convolutional
autoencoder with cross-domain attention that maps raw snapshots to a
bounded health indicator.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    HiforgeError,
    NumericalError,
    UsageError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DataError",
    "DimensionError",
    "HiforgeError",
    "NumericalError",
    "UsageError",
]
