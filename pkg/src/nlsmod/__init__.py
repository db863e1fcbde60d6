"""Numerical engine for the g-function, the determinant formula h = R K / D and the
modulation equations of the semiclassical focusing NLS equation."""

from .evolution import (
    Trajectory,
    alpha_rates,
    constants_rates,
    dK_dt,
    dK_dx,
    evolve,
    velocities,
)
from .geometry import BranchpointSet, ContourSystem, build_contours, point_location, radical_R
from .modulation import NewtonReport, eval_cj, newton_solve
from .rhp import RHPSolution, eval_D, eval_g, eval_h, eval_K, solve_constants
from .scattering import ScatteringData, parse_f0

__version__ = "0.1.0"

__all__ = [
    "BranchpointSet",
    "ContourSystem",
    "NewtonReport",
    "RHPSolution",
    "ScatteringData",
    "Trajectory",
    "alpha_rates",
    "build_contours",
    "constants_rates",
    "dK_dt",
    "dK_dx",
    "eval_D",
    "eval_K",
    "eval_cj",
    "eval_g",
    "eval_h",
    "evolve",
    "newton_solve",
    "parse_f0",
    "point_location",
    "radical_R",
    "solve_constants",
    "velocities",
]
