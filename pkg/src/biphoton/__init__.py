"""Induced-coherence biphoton interferometer simulator."""

from .algebra import ModeRegistry, OperatorExpression, vacuum_expectation
from .network import Network, three_crystal_network, propagate, validate
from .rates import coincidence_rate, leading_rate, network_rate, singles_rate

__all__ = [
    "ModeRegistry", "OperatorExpression", "vacuum_expectation",
    "Network", "three_crystal_network", "propagate", "validate",
    "coincidence_rate", "leading_rate", "network_rate", "singles_rate",
]
