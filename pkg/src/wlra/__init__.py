"""Specially weighted low-rank approximation and RPCA baselines."""
from . import bench, closedform, fileio, kernels, matcore, oracle, rpca, swlr
from .closedform import PartitionedMatrix, ghs_solve, pca_truncate
from .swlr import ConvergenceTrace, SwlrConfig, SwlrState, WeightMask

__version__ = "0.1.0"

__all__ = [
    "ConvergenceTrace",
    "PartitionedMatrix",
    "SwlrConfig",
    "SwlrState",
    "WeightMask",
    "bench",
    "closedform",
    "fileio",
    "ghs_solve",
    "kernels",
    "matcore",
    "oracle",
    "pca_truncate",
    "rpca",
    "swlr",
]
