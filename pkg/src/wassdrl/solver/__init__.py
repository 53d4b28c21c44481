"""Embedded optimization engines."""

from .composite import CompositeProblem, CompositeResult, project_norm_cone, solve_composite
from .linalg import sym_eig_sqrt
from .lp import LPBuilder, LPSolution, LPStatus, StandardFormLP, dump_lp, solve_lp
from .norms import conjugate_exponent, dual_norm, norm_subgradient, parse_p, pnorm, project_ball, project_l1_ball
from .options import SolveOptions

__all__ = [
    "CompositeProblem",
    "CompositeResult",
    "LPBuilder",
    "LPSolution",
    "LPStatus",
    "SolveOptions",
    "StandardFormLP",
    "conjugate_exponent",
    "dual_norm",
    "dump_lp",
    "norm_subgradient",
    "parse_p",
    "pnorm",
    "project_ball",
    "project_l1_ball",
    "project_norm_cone",
    "solve_composite",
    "solve_lp",
    "sym_eig_sqrt",
]
