"""Adaptive 2D finite elements for boundary-flux approximation.

The package solves variable-coefficient diffusion problems with weakly
imposed Dirichlet data (Lagrange multipliers, Barbosa-Hughes
stabilization, or Nitsche's method), estimates the flux error in the
dual trace norm with a distance-weighted residual indicator, and drives
adaptive mesh refinement with it.
"""

__version__ = "0.1.0"

from .mesh import (
    Mesh,
    build_unit_square,
    build_lshape,
    build_domain_mesh,
    build_graded_mesh,
    refine,
    uniform_refine,
    compute_distance_field,
)

__all__ = [
    "Mesh",
    "build_unit_square",
    "build_lshape",
    "build_domain_mesh",
    "build_graded_mesh",
    "refine",
    "uniform_refine",
    "compute_distance_field",
    "__version__",
]
