"""Besov-type norms on good grids of [0, 1], computed exactly at finite depth."""

from .errors import (
    DepthLimitExceeded,
    EnumerationGuard,
    GridError,
    GuardError,
    NotExact,
    ParameterError,
    PartitionGap,
    RatioViolation,
    SelectionInfeasible,
)
from .grid_core import (
    CellAddress,
    Grid,
    GridCell,
    GridMeta,
    NAdicGrid,
    WeightedBinaryGrid,
    ExplicitTreeGrid,
    build_nadic,
    build_weighted_binary,
    canonicalize_to_interval_grid,
    regroup_by_measure,
    validate_good_grid,
)
from .norms import (
    AtomicRep,
    BesovParams,
    NormResult,
    greedy_atomic_decomposition,
    haar_expand,
    haar_norm,
    martingale_norm,
    oscillation_norm,
    rep_norm,
    rep_to_function,
)
from .stepfun import StepFunction

__version__ = "0.1.0"

__all__ = [
    "AtomicRep",
    "BesovParams",
    "CellAddress",
    "DepthLimitExceeded",
    "EnumerationGuard",
    "ExplicitTreeGrid",
    "Grid",
    "GridCell",
    "GridError",
    "GridMeta",
    "GuardError",
    "NAdicGrid",
    "NormResult",
    "NotExact",
    "ParameterError",
    "PartitionGap",
    "RatioViolation",
    "SelectionInfeasible",
    "StepFunction",
    "WeightedBinaryGrid",
    "build_nadic",
    "build_weighted_binary",
    "canonicalize_to_interval_grid",
    "greedy_atomic_decomposition",
    "haar_expand",
    "haar_norm",
    "martingale_norm",
    "oscillation_norm",
    "regroup_by_measure",
    "rep_norm",
    "rep_to_function",
    "validate_good_grid",
]
