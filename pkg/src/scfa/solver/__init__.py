"""Constrained simultaneous confirmatory factor analysis (SCFA) for CPSDM sequences."""

from .constraints import ConstraintSet, build_constraints, ratf_bounds
from .identifiability import (
    Identifiability,
    check_identifiability,
    kruskal_rank,
    maximum_sources,
    minimum_frames,
    minimum_mics,
)
from .objectives import Objective, objective_and_gradient
from .online import OnlineResult, resolve_permutation, run_online
from .packing import VariablePacking
from .segment import SolveReport, initialize_segment, kkt_residual, solve_segment
from .variants import METHODS, ProblemVariant, get_variant

__all__ = [
    "ConstraintSet", "build_constraints", "ratf_bounds",
    "Identifiability", "check_identifiability", "kruskal_rank", "maximum_sources",
    "minimum_frames", "minimum_mics",
    "Objective", "objective_and_gradient",
    "OnlineResult", "resolve_permutation", "run_online",
    "VariablePacking",
    "SolveReport", "initialize_segment", "kkt_residual", "solve_segment",
    "METHODS", "ProblemVariant", "get_variant",
]
