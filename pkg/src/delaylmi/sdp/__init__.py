"""Solver-neutral SDP form, native feasibility solve and SDPA interchange."""
from .problem import SdpConstraint, SdpProblem, denormalize, normalize
from .solve import (FEASIBLE, INCONCLUSIVE, INFEASIBLE, FeasibilityResult, SolverConfig,
                    recheck, solve)

__all__ = [
    "SdpConstraint", "SdpProblem", "normalize", "denormalize",
    "FEASIBLE", "INFEASIBLE", "INCONCLUSIVE", "FeasibilityResult", "SolverConfig",
    "recheck", "solve",
]
