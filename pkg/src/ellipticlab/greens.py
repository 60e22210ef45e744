"""Discrete Dirichlet and Neumann functions and their radial decay.

The discrete point source at a node is the unit load vector, which is the exact
dual of nodal evaluation for the Q1 basis.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .assembly import ComplexField, assemble_form, assemble_point_load
from .coeffs import CoefficientSet
from .linsolve import SolverConfig, solve
from .mesh import BoxMesh, build_box_mesh

__all__ = ["DecayFit", "FitError", "dirichlet_green", "neumann_function", "decay_fit",
           "window_bound", "radial_profile", "neumann_k_sweep", "SweepRow",
           "truncation_study", "TruncationRow", "TruncationResult"]

DIM = 3
MIN_SAMPLES = 10


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class DecayFit:
    pole: int
    r_min: float
    r_max: float
    slope: float
    intercept: float
    n_samples: int
    residual: float
    sup_bound: float  # max over the window of |field| * r^(n-2)

    @property
    def c_est(self) -> float:
        return float(np.exp(self.intercept))


def dirichlet_green(mesh: BoxMesh, coeffs: CoefficientSet, y: int,
                    solver: SolverConfig = SolverConfig()) -> ComplexField:
    """G_h(., y): solution of the Dirichlet system with the unit load at ``y``."""
    A = assemble_form(mesh, coeffs, "dirichlet")
    x, _ = solve(A, assemble_point_load(mesh, y, "dirichlet"), solver)
    x[mesh.boundary] = 0.0
    return ComplexField(x, mesh, "dirichlet")


def neumann_function(mesh: BoxMesh, coeffs: CoefficientSet, y: int,
                     solver: SolverConfig = SolverConfig()) -> ComplexField:
    """N_h(., y) under the natural (conormal) boundary condition."""
    A = assemble_form(mesh, coeffs, "neumann")
    x, _ = solve(A, assemble_point_load(mesh, y, "neumann"), solver)
    return ComplexField(x, mesh, "neumann")


def default_window(mesh: BoxMesh):
    return 4.0 * mesh.h, 0.25 * float(mesh.extent.min())


def _window_nodes(field: ComplexField, y: int, r_min: float, r_max: float):
    mesh = field.mesh
    if r_min < 2 * mesh.h * (1 - 1e-12):
        raise FitError(f"r_min = {r_min:g} is below twice the spacing {2 * mesh.h:g}")
    if r_max > 0.25 * mesh.extent.min() * (1 + 1e-12):
        raise FitError(f"r_max = {r_max:g} exceeds a quarter of the smallest extent")
    if r_max <= r_min:
        raise FitError(f"fit window [{r_min:g}, {r_max:g}] is empty; the mesh is too coarse for it")
    r = np.linalg.norm(mesh.points - mesh.points[y], axis=1)
    tol = 1e-12 * r_max
    sel = (r >= r_min - tol) & (r <= r_max + tol)
    if field.bc == "dirichlet":
        sel &= mesh.distance_to_boundary() >= 2 * mesh.h * (1 - 1e-12)
    return np.flatnonzero(sel), r


def window_bound(field: ComplexField, y: int, r_min=None, r_max=None) -> float:
    """max over the window of |field(x)| |x - y|^(n-2)."""
    d_min, d_max = default_window(field.mesh)
    idx, r = _window_nodes(field, y, d_min if r_min is None else r_min, d_max if r_max is None else r_max)
    if idx.size == 0:
        raise FitError("no nodes in the window")
    return float(np.max(np.abs(field.values[idx]) * r[idx] ** (DIM - 2)))


def decay_fit(field: ComplexField, y: int, r_min: Optional[float] = None,
              r_max: Optional[float] = None) -> DecayFit:
    """Least-squares fit of log|field| against log|x - y| over the window.

    Nodes closer than 2h to the boundary are dropped for Dirichlet fields.
    """
    d_min, d_max = default_window(field.mesh)
    r_min = d_min if r_min is None else float(r_min)
    r_max = d_max if r_max is None else float(r_max)
    idx, r = _window_nodes(field, y, r_min, r_max)
    mag = np.abs(field.values[idx])
    idx, mag = idx[mag > 0], mag[mag > 0]
    if idx.size < MIN_SAMPLES:
        raise FitError(f"only {idx.size} samples in [{r_min:g}, {r_max:g}]; need {MIN_SAMPLES}")
    lx, ly = np.log(r[idx]), np.log(mag)
    design = np.stack([lx, np.ones_like(lx)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = float(np.sqrt(np.mean((design @ np.array([slope, intercept]) - ly) ** 2)))
    sup = float(np.max(mag * r[idx] ** (DIM - 2)))
    return DecayFit(int(y), r_min, r_max, float(slope), float(intercept), int(idx.size), resid, sup)


def radial_profile(field: ComplexField, y: int):
    """Rows (r, |G|, arg G) for every node except the pole, sorted by r then node."""
    r = np.linalg.norm(field.mesh.points - field.mesh.points[y], axis=1)
    order = np.lexsort((np.arange(r.size), r))
    order = order[r[order] > 0]
    v = field.values[order]
    return np.stack([r[order], np.abs(v), np.angle(v)], axis=1)


@dataclass(frozen=True)
class SweepRow:
    k: float
    c_obs: float
    envelope: float

    @property
    def ratio(self) -> float:
        return self.c_obs / self.envelope


def neumann_k_sweep(mesh: BoxMesh, coeffs: CoefficientSet, y: int, ks: Sequence[float],
                    solver: SolverConfig = SolverConfig(), r_min=None, r_max=None) -> list:
    """Windowed bound constant of N_h(., y) for each k, sorted by k."""
    ks = sorted(float(k) for k in ks)
    if not ks:
        raise ValueError("k list is empty")
    if any(k == 0 for k in ks):
        raise ValueError("k = 0 makes the Neumann problem ill-posed")
    rows = []
    for k in ks:
        n = neumann_function(mesh, coeffs.with_k(k), y, solver)
        rows.append(SweepRow(k, window_bound(n, y, r_min, r_max), max(1.0, abs(k) ** -0.5)))
    return rows


@dataclass(frozen=True)
class TruncationRow:
    R: float
    value: complex
    n_nodes: int
    difference: float  # |G^(R) - G^(previous R)| at the probe, nan for the first row


@dataclass(frozen=True)
class TruncationResult:
    rows: tuple
    truncated: bool  # True when the memory cap stopped the study early

    @property
    def largest_R(self) -> float:
        return self.rows[-1].R if self.rows else float("nan")


def truncation_study(coeff_factory: Callable[[BoxMesh], CoefficientSet], radii: Sequence[float],
                     h: float, y, x_probe, solver: SolverConfig = SolverConfig(),
                     max_nodes: int = 2_000_000) -> TruncationResult:
    """Dirichlet solves on nested boxes [-R, R]^3 at fixed spacing ``h``.

    ``coeff_factory`` evaluates the whole-space coefficients on each box.  Pole
    ``y`` and probe ``x_probe`` are coordinates that must be nodes of every box.
    """
    rows = []
    prev = None
    truncated = False
    for R in sorted(float(R) for R in radii):
        n_div = 2 * R / h
        if abs(n_div - round(n_div)) > 1e-9 * n_div:
            raise ValueError(f"2R/h must be an integer (R={R}, h={h})")
        n_div = int(round(n_div))
        if (n_div + 1) ** 3 > max_nodes:
            truncated = True
            break
        mesh = build_box_mesh((-R, -R, -R), (2 * R,) * 3, (n_div,) * 3)
        yi = mesh.index_of(y)
        xi = mesh.index_of(x_probe)
        if mesh.boundary[yi] or mesh.boundary[xi]:
            raise ValueError(f"pole and probe must be interior to the box of half-width {R}")
        g = dirichlet_green(mesh, coeff_factory(mesh), yi, solver)
        val = complex(g.values[xi])
        diff = float("nan") if prev is None else abs(val - prev)
        rows.append(TruncationRow(R, val, mesh.n_nodes, diff))
        prev = val
    return TruncationResult(tuple(rows), truncated)
