"""Single-facility location when a hyperplane separates two normed media.

The main entry points are re-exported here; see the submodules for details.
"""
from .geometry import DemandPoint, Hyperplane, Side, parse_hyperplane, project_lp, side_of
from .kernels import BACKEND
from .locate import LocateResult, LocationInstance, objective_eval, solve, solve_side, uniqueness_report
from .norms import NormSpec, dual_norm, norm_eval, parse_norm, subgradient
from .refraction import PathQuery, gate_single, gate_transit, reduction_applies, retm_check, snell_residual

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DemandPoint", "Hyperplane", "LocateResult", "LocationInstance", "NormSpec", "PathQuery",
    "Side", "dual_norm", "gate_single", "gate_transit", "norm_eval", "objective_eval", "parse_hyperplane",
    "parse_norm", "project_lp", "reduction_applies", "retm_check", "side_of", "snell_residual", "solve",
    "solve_side", "subgradient", "uniqueness_report",
]
