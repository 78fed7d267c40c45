"""Commands module for the spikelab command-line surface."""

from . import ground_state, checks, spike

__all__ = ["ground_state", "checks", "spike"]
