"""Distributed dominant-SVD solvers over a simulated all-reduce fabric.

The package provides a consensus ADMM solver that equalizes the subspaces
spanned by per-node bases instead of the bases themselves, directly
parallelized baseline eigensolvers for comparison, a reconstruction-attack
auditor quantifying what a wire eavesdropper can recover from each
algorithm, and runtime monitors for the solver's convergence theory.
"""

from .core import (
    DapsConfig,
    DapsRunResult,
    IterationRecord,
    KktCertificate,
    NodeState,
    run_daps,
)
from .data import GroundTruth, SyntheticSpec, generate_synthetic, load_matrix, partition_columns, save_matrix
from .eigensolvers import ConditionConstants, SlrpgnConfig, SymmetricOperator
from .linalg import GramOperator, StiefelPoint, orthonormalize, projection_distance
from .netsim import CommStats, Fabric, comm_stats

__all__ = [
    "CommStats",
    "ConditionConstants",
    "DapsConfig",
    "DapsRunResult",
    "Fabric",
    "GramOperator",
    "GroundTruth",
    "IterationRecord",
    "KktCertificate",
    "NodeState",
    "SlrpgnConfig",
    "StiefelPoint",
    "SymmetricOperator",
    "SyntheticSpec",
    "comm_stats",
    "generate_synthetic",
    "load_matrix",
    "orthonormalize",
    "partition_columns",
    "projection_distance",
    "run_daps",
    "save_matrix",
]
