"""Core module for spikelab settings and the shared error hierarchy."""

from .config import settings
from .exceptions import (
    SpikeLabError,
    ConfigError,
    SolverError,
    BoundaryGapError,
    SaddleDivergenceError,
)

__all__ = [
    "settings",
    "SpikeLabError",
    "ConfigError",
    "SolverError",
    "BoundaryGapError",
    "SaddleDivergenceError",
]
