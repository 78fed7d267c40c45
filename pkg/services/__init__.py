"""Services module for spikelab numerical pipelines."""

from .nonlinearity import TruncatedNonlinearity
from .grid_solver import GridProblem
from .minmax import ConeSampler
from .pipeline import SpikePipeline, run_sweep

__all__ = [
    "TruncatedNonlinearity",
    "GridProblem",
    "ConeSampler",
    "SpikePipeline",
    "run_sweep",
]
