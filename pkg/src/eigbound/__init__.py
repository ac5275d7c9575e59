"""Interior penalty DG eigenvalue solver with a posteriori error bounds.

Solves the periodic problem -lap u + V u = lambda u with non-polynomial
adaptive local basis functions and computes residual-based upper bounds and
bubble-function lower bounds for eigenfunction and eigenvalue errors.
"""

from .mesh import build_partition, build_quadrature
from .spectral import PotentialSpec, solve_planewave, reference_solution
from .basis import generate_alb, load_basis
from .constants import compute_constants
from .dg import assemble, solve_eig, energy_norm, evaluate_bilinear
from .estimators import estimate
from .report import align, build_report
from .config import load_config, parse_config

__version__ = "0.1.0"

__all__ = [
    "build_partition", "build_quadrature", "PotentialSpec", "solve_planewave",
    "reference_solution", "generate_alb", "load_basis", "compute_constants", "assemble",
    "solve_eig", "energy_norm", "evaluate_bilinear", "estimate", "align", "build_report",
    "load_config", "parse_config",
]
