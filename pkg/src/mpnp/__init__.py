"""Two-species multiscale Poisson-Nernst-Planck solvers.

Subpackages cover the 1D resolved/trap/sum-charge models, a stiffly
accurate IMEX integrator for the resulting differential-algebraic systems,
an unfitted bilinear FEM on level-set domains with exact cut-cell
quadrature, and the validation metrics (convergence orders, model
agreement, conservation, quasi-neutrality, positivity).
"""

from .params import (
    LAB_CONSTANTS,
    LJPotentialSpec,
    PhysicalParams,
    compute_trap_m,
    potential_u_minus,
    potential_u_plus,
)

__all__ = [
    "LAB_CONSTANTS",
    "LJPotentialSpec",
    "PhysicalParams",
    "compute_trap_m",
    "potential_u_minus",
    "potential_u_plus",
]

__version__ = "0.1.0"
