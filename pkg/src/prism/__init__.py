"""Hierarchical time-frequency forecasting with tree partitioning and learned band routing."""
from .filters import BandSet, FilterSpec, decompose, recombine
from .kernels import BACKEND
from .model import PrismConfig, decompose_trace, forward, init_params, loss, mae
from .router import RouterConfig
from .tree import PartitionPlan, plan, split, stitch

__all__ = [
    "BACKEND",
    "BandSet",
    "FilterSpec",
    "PartitionPlan",
    "PrismConfig",
    "RouterConfig",
    "decompose",
    "decompose_trace",
    "forward",
    "init_params",
    "loss",
    "mae",
    "plan",
    "recombine",
    "split",
    "stitch",
]
__version__ = "0.1.0"
