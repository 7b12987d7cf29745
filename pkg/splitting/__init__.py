"""Projective splitting solver for 0 in sum_i G_i^* T_i(G_i z)."""

from splitting.diagnostics import audit_trace, complexity_bounds, constant_c, omega, residuals
from splitting.problems import make_affine_feasibility, make_fused, make_lasso, make_skew_saddle
from splitting.ps_core import ProjectiveSplittingSolver, SolverConfig, solve
from splitting.ps_variants import VariantKind, make_inner_solver

__all__ = [
    "ProjectiveSplittingSolver",
    "SolverConfig",
    "VariantKind",
    "audit_trace",
    "complexity_bounds",
    "constant_c",
    "make_affine_feasibility",
    "make_fused",
    "make_inner_solver",
    "make_lasso",
    "make_skew_saddle",
    "omega",
    "residuals",
    "solve",
]
