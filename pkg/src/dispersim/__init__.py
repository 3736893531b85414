"""Deterministic simulator and verification harness for multi-robot
dispersion on anonymous port-labeled graphs."""

from .graph import PortLabeledGraph, build_graph, generate, parse_graph_file, serialize_graph
from .engine import (SimState, run_until, step_round, Outcome, make_adversary,
                     AllAdversary, RandomSubsetAdversary, RoundRobinAdversary)
from .dfs import DfsProtocol
from .disperse import DisperseProtocol, size_compare
from . import analysis

__all__ = [
    "PortLabeledGraph", "build_graph", "generate", "parse_graph_file",
    "serialize_graph", "SimState", "run_until", "step_round", "Outcome",
    "make_adversary", "AllAdversary", "RandomSubsetAdversary",
    "RoundRobinAdversary", "DfsProtocol", "DisperseProtocol", "size_compare",
    "analysis",
]
