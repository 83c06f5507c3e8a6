"""Adaptive snapshot selection for POD-based optimal control of the heat equation."""

from .discretization import SpatialGrid, TimeGrid
from .pipeline import PipelineConfig, PipelineResult, run, sweep
from .problems import ProblemSpec, get_problem

__all__ = [
    "PipelineConfig",
    "PipelineResult",
    "ProblemSpec",
    "SpatialGrid",
    "TimeGrid",
    "get_problem",
    "run",
    "sweep",
]

__version__ = "0.1.0"
