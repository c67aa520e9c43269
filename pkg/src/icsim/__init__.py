"""Simulation toolkit for local SGD and mini-batch SGD on heterogeneous quadratics."""

from __future__ import annotations

from .algorithms import AlgorithmConfig, Trajectory, run
from .oracle import NoiseSpec
from .quad_core import ProblemInstance, QuadraticMachine, SymMatrix, global_optimum, mean_optimum

__version__ = "0.1.0"

__all__ = [
    "AlgorithmConfig",
    "NoiseSpec",
    "ProblemInstance",
    "QuadraticMachine",
    "SymMatrix",
    "Trajectory",
    "global_optimum",
    "mean_optimum",
    "run",
]
