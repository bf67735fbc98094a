"""Quickest change detection with online estimation of pre- and post-change parameters."""
from . import detectors, metrics, param_kernels, posterior, simulation, statistics
from ._accel import NUMBA_ENABLED
from .errors import (
    ConfigError,
    InvalidArgumentError,
    InvalidInputError,
    NotDerivableError,
    UndefinedResultError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "InvalidArgumentError", "InvalidInputError", "NUMBA_ENABLED", "NotDerivableError",
    "UndefinedResultError", "detectors", "metrics", "param_kernels", "posterior", "simulation", "statistics",
]
