"""Distributed minimum spanning forests on an in-process SPMD runtime.

Borůvka and Filter-Borůvka over a 1D-partitioned, globally sorted edge
list, with the collectives they need, seeded generators and a sequential
reference oracle.
"""
from .boruvka import BoruvkaConfig, MsfResult, mst
from .filter_boruvka import FilterConfig, filter_mst
from .generators import generate, parse_spec
from .graph import EDGE_DTYPE, DistributedGraph, build_distributed_graph, symmetrize_and_number
from .transport import Communicator, run_spmd

__version__ = "0.1.0"

__all__ = [
    "BoruvkaConfig",
    "Communicator",
    "DistributedGraph",
    "EDGE_DTYPE",
    "FilterConfig",
    "MsfResult",
    "build_distributed_graph",
    "filter_mst",
    "generate",
    "mst",
    "parse_spec",
    "run_spmd",
    "symmetrize_and_number",
]
