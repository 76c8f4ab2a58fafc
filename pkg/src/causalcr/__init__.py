"""Causal LLR-based opportunistic transmission for cognitive radios over a Markovian primary user."""

from causalcr.emission import EmissionModel
from causalcr.pu_chain import StateTrace, TransitionMatrix, stationary_distribution

__all__ = ["EmissionModel", "StateTrace", "TransitionMatrix", "stationary_distribution"]
__version__ = "0.1.0"
