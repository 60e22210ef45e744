"""Finite element laboratory for L u = -div(gamma grad u) + i k u on 3-D boxes.

Weak solutions, discrete Dirichlet and Neumann functions, and measured
constants for the k-independent Hölder, sup-norm and Green-function bounds.
"""
__version__ = "0.1.0"

from .assembly import (ComplexField, ComplexSparseMatrix, assemble_form, assemble_point_load,
                       assemble_volume_load)
from .coeffs import CoefficientSet, oscillation_seminorm, pattern, verify_ellipticity
from .greens import decay_fit, dirichlet_green, neumann_function, neumann_k_sweep, truncation_study
from .linsolve import SolverConfig, solve, solve_bicgstab, solve_dense
from .mesh import BoxMesh, ball_nodes, build_box_mesh

__all__ = [
    "BoxMesh", "build_box_mesh", "ball_nodes",
    "CoefficientSet", "pattern", "verify_ellipticity", "oscillation_seminorm",
    "ComplexSparseMatrix", "ComplexField", "assemble_form", "assemble_volume_load", "assemble_point_load",
    "SolverConfig", "solve", "solve_bicgstab", "solve_dense",
    "dirichlet_green", "neumann_function", "decay_fit", "neumann_k_sweep", "truncation_study",
]
