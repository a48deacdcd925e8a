"""Minimum-distortion computation over the auxiliary-variable rate region."""

from .couplings import min_cost_coupling
from .oracle import ComplexityError, grid_oracle, grid_oracle_many
from .solver import (
    BoundaryRow,
    RateTuple,
    RegionError,
    RegionProblem,
    RegionSolution,
    certify,
    converse_slack,
    independent_distortion,
    membership,
    min_distortion,
    trace_boundary,
    write_boundary_csv,
)

__all__ = [
    "BoundaryRow", "ComplexityError", "RateTuple", "RegionError", "RegionProblem",
    "RegionSolution", "certify", "converse_slack", "grid_oracle", "grid_oracle_many",
    "independent_distortion", "membership", "min_cost_coupling", "min_distortion",
    "trace_boundary", "write_boundary_csv",
]
