"""Measured constants of the interior Hölder, boundary sup and energy estimates.

Norms are evaluated by tensor Gauss quadrature of the Q1 interpolant (nodal
data) or of piecewise-constant cell data; ball restrictions keep the
quadrature points inside the closed ball.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .assembly import (ComplexField, ComplexSparseMatrix, assemble_form, assemble_parts, assemble_volume_load,
                       gauss_points, gradient_at_gauss, source_at_gauss, values_at_gauss)
from .coeffs import CoefficientSet
from .linsolve import SolverConfig, solve
from .mesh import BoxMesh, ball_nodes

__all__ = ["EstimateReport", "EnergyReport", "MMSRow", "EstimateError", "UndefinedConstantError",
           "holder_seminorm", "lp_norm", "interior_constant", "boundary_sup_constant",
           "k_sweep", "energy_check", "parabolic_lift_check", "mms_convergence",
           "manufactured_sine", "solve_load", "ESTIMATE_SCHEMA"]

DIM = 3
ESTIMATE_SCHEMA = "estimate-report/1"


class EstimateError(ValueError):
    pass


class UndefinedConstantError(EstimateError):
    pass


@dataclass(frozen=True)
class EstimateReport:
    kind: str                 # "interior" or "boundary-<bc>"
    x0: tuple
    r: float
    alpha: float
    p: float
    k: float
    h: float
    nu: float
    seminorm: float           # [u]_alpha on the half ball (nan for boundary reports)
    sup_norm: float           # max |u| on the half ball
    l2_norm: float            # ||u||_L2 on the ball
    lp_source: float          # ||f||_Lp on the ball
    c_est: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        d = asdict(self)
        d["x0"] = " ".join(repr(float(v)) for v in self.x0)
        return d


# --- discrete norms -----------------------------------------------------------
def holder_seminorm(field, region: Sequence[int], alpha: float, min_dist: Optional[float] = None,
                    mesh: Optional[BoxMesh] = None) -> float:
    """max |u(x) - u(y)| / |x - y|^alpha over node pairs of ``region`` at least
    ``min_dist`` (default: smallest spacing) apart."""
    if not 0 < alpha < 1:
        raise EstimateError(f"alpha must lie in (0, 1), got {alpha}")
    if isinstance(field, ComplexField):
        mesh, values = field.mesh, field.values
    else:
        values = np.asarray(field, dtype=np.complex128)
        if mesh is None:
            raise TypeError("a mesh is required with raw nodal values")
    region = np.asarray(region, dtype=np.int64)
    if region.size < 2:
        raise EstimateError("region needs at least two nodes")
    if min_dist is None:
        min_dist = float(mesh.spacing.min())
    pts = np.ascontiguousarray(mesh.points[region])
    vals = np.ascontiguousarray(values[region], dtype=np.complex128)
    best, count = kernels.holder_max(pts, vals, float(alpha), float(min_dist) * (1 - 1e-12))
    if count < 1:
        raise EstimateError("no node pair in the region is separated by the minimum distance")
    return float(best)


def _quadrature_data(mesh: BoxMesh, data, location: Optional[str], order: int):
    if isinstance(data, ComplexField):
        return values_at_gauss(mesh, data.values, order)
    if callable(data):
        return source_at_gauss(mesh, data, order)
    arr = np.asarray(data)
    if location is None:
        if arr.ndim == 0:
            location = "cell"
        elif arr.shape == (mesh.n_nodes,) and arr.shape != (mesh.n_cells,):
            location = "node"
        elif arr.shape == (mesh.n_cells,) and arr.shape != (mesh.n_nodes,):
            location = "cell"
        else:
            raise ValueError("cannot tell nodal from cell data; pass location=")
    if location == "node":
        return values_at_gauss(mesh, arr, order)
    if location == "cell":
        return source_at_gauss(mesh, arr, order)
    raise ValueError(f"unknown location {location!r}")


def _ball_weights(mesh: BoxMesh, center, radius, order):
    x, w = gauss_points(mesh, order)
    wq = np.broadcast_to(w, x.shape[:2]).copy()
    if center is not None:
        d2 = np.sum((x - np.asarray(center, float)) ** 2, axis=2)
        wq[d2 > radius * radius * (1 + 1e-12)] = 0.0
    return wq


def lp_norm(data, p: float, mesh: BoxMesh, center=None, radius: Optional[float] = None,
            location: Optional[str] = None, order: int = 2) -> float:
    """Volume-weighted discrete L^p norm, optionally over the ball B_radius(center).

    ``data`` is a :class:`ComplexField`, a nodal or per-cell array, a scalar, or
    a callable of points.  For cell data over the whole mesh this is the
    cell-centre formula sum |f_c|^p |cell|.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    vals = np.abs(_quadrature_data(mesh, data, location, order))
    wq = _ball_weights(mesh, center, radius, order)
    if math.isinf(p):
        inside = wq > 0
        return float(vals[inside].max()) if inside.any() else 0.0
    return float(np.sum(wq * vals ** p) ** (1.0 / p))


# --- local estimate constants ------------------------------------------------------
def solve_load(mesh: BoxMesh, coeffs: CoefficientSet, f, bc: str = "dirichlet",
               solver: SolverConfig = SolverConfig()) -> ComplexField:
    A = assemble_form(mesh, coeffs, bc)
    x, _ = solve(A, assemble_volume_load(mesh, f, bc), solver)
    if bc == "dirichlet":
        x[mesh.boundary] = 0.0
    return ComplexField(x, mesh, bc)


def _k_value(coeffs: CoefficientSet) -> float:
    return float(coeffs.k_constant) if coeffs.k_is_constant else float("nan")


def interior_constant(mesh: BoxMesh, coeffs: CoefficientSet, f, x0, r: float, alpha: float = 0.5,
                      p: float = 2.0, solver: SolverConfig = SolverConfig(),
                      u: Optional[ComplexField] = None) -> EstimateReport:
    """Quotient [u]_{alpha; B_{r/2}} / (r^-alpha (r^{-n/2}||u||_{L2(B_r)} + r^{2-n/p}||f||_{Lp(B_r)}))
    for the Dirichlet solution of L u = f on the whole mesh."""
    if not p > DIM / 2:
        raise EstimateError(f"p must exceed n/2 = {DIM / 2}")
    x0 = np.asarray(x0, dtype=float)
    ball = ball_nodes(mesh, x0, r)
    inside_box = np.all(x0 - r >= mesh.origin - 1e-12) and np.all(x0 + r <= mesh.origin + mesh.extent + 1e-12)
    if ball.size == 0 or mesh.boundary[ball].any() or not inside_box:
        raise EstimateError(f"B_{r:g}({x0.tolist()}) is not contained in the domain interior")
    if u is None:
        u = solve_load(mesh, coeffs, f, "dirichlet", solver)
    half = ball_nodes(mesh, x0, 0.5 * r)
    sem = holder_seminorm(u, half, alpha)
    l2 = lp_norm(u, 2, mesh, x0, r)
    lpf = lp_norm(f, p, mesh, x0, r)
    denom = r ** -alpha * (r ** (-DIM / 2) * l2 + r ** (2 - DIM / p) * lpf)
    if denom == 0:
        raise UndefinedConstantError("u and f vanish on the ball; the constant is undefined")
    return EstimateReport("interior", tuple(x0.tolist()), float(r), float(alpha), float(p),
                          _k_value(coeffs), mesh.h, coeffs.nu, sem,
                          float(np.abs(u.values[half]).max()), l2, lpf, sem / denom)


def boundary_sup_constant(mesh: BoxMesh, coeffs: CoefficientSet, f, x0, r: float, p: float = 2.0,
                          bc: str = "dirichlet", solver: SolverConfig = SolverConfig(),
                          u: Optional[ComplexField] = None) -> EstimateReport:
    """Quotient ||u||_{Linf(Omega_{r/2})} / (r^{-n/2}||u||_{L2(Omega_r)} + r^{2-n/p}||f||_{Lp(Omega_r)})
    around a boundary point ``x0``."""
    if not p > DIM / 2:
        raise EstimateError(f"p must exceed n/2 = {DIM / 2}")
    x0 = np.asarray(x0, dtype=float)
    if mesh.distance_to_boundary(x0)[0] > 0.5 * mesh.spacing.min():
        raise EstimateError(f"x0 = {x0.tolist()} is not on the boundary")
    diam = float(np.linalg.norm(mesh.extent))
    if not 0 < r < diam:
        raise EstimateError(f"r must lie in (0, diam) = (0, {diam:g})")
    if u is None:
        u = solve_load(mesh, coeffs, f, bc, solver)
    half = ball_nodes(mesh, x0, 0.5 * r)
    if half.size == 0:
        raise EstimateError("no node within r/2 of x0")
    sup = float(np.abs(u.values[half]).max())
    l2 = lp_norm(u, 2, mesh, x0, r)
    lpf = lp_norm(f, p, mesh, x0, r)
    denom = r ** (-DIM / 2) * l2 + r ** (2 - DIM / p) * lpf
    if denom == 0:
        raise UndefinedConstantError("u and f vanish on the ball; the constant is undefined")
    return EstimateReport(f"boundary-{bc}", tuple(x0.tolist()), float(r), float("nan"), float(p),
                          _k_value(coeffs), mesh.h, coeffs.nu, float("nan"), sup, l2, lpf, sup / denom)


def k_sweep(estimator: Callable[..., EstimateReport], mesh: BoxMesh, coeffs: CoefficientSet,
            ks: Sequence[float], **kwargs) -> list:
    """Run an estimator for each constant k; reports sorted by k."""
    if not ks:
        raise ValueError("k list is empty")
    return [estimator(mesh, coeffs.with_k(k), **kwargs) for k in sorted(float(k) for k in ks)]


# --- energy bounds -------------------------------------------------------------------
@dataclass(frozen=True)
class EnergyReport:
    k: float
    nu: float
    grad_l2: float
    l2: float
    source_norm: float   # ||f||_{L^{6/5}}
    r_grad: float        # nu ||grad u|| / ||f||
    r_mass: float        # sqrt|k| ||u|| / ||f||
    trivial: bool


def energy_check(mesh: BoxMesh, coeffs: CoefficientSet, f,
                 solver: SolverConfig = SolverConfig()) -> EnergyReport:
    """Ratios of the Dirichlet solution's energy and mass to ||f||_{L^{2n/(n+2)}}.

    For a variable k the smallest |k| over the cells is used.
    """
    p_src = 2 * DIM / (DIM + 2)
    fn = lp_norm(f, p_src, mesh)
    kabs = abs(coeffs.k_constant) if coeffs.k_is_constant else float(np.abs(coeffs.k).min())
    if fn == 0:
        return EnergyReport(_k_value(coeffs), coeffs.nu, 0.0, 0.0, 0.0, float("nan"), float("nan"), True)
    u = solve_load(mesh, coeffs, f, "dirichlet", solver)
    _, w = gauss_points(mesh)
    grad = gradient_at_gauss(mesh, u.values)
    g2 = float(np.sqrt(np.sum(w[None, :] * np.sum(np.abs(grad) ** 2, axis=2))))
    l2 = lp_norm(u, 2, mesh)
    return EnergyReport(_k_value(coeffs), coeffs.nu, g2, l2, fn, coeffs.nu * g2 / fn,
                        math.sqrt(kabs) * l2 / fn, False)


# --- parabolic lifting -----------------------------------------------------------------
def parabolic_lift_check(mesh: BoxMesh, coeffs: CoefficientSet, f, T: float, steps: int,
                         solver: SolverConfig = SolverConfig(tol=1e-12)) -> float:
    """Relative L2 gap between implicit-Euler marching of v_t - div(gamma grad v) = e^{ikt} f
    from v(0) = u_h and the lifted solution e^{ikT} u_h."""
    if steps < 1:
        raise EstimateError("steps must be >= 1")
    if not coeffs.k_is_constant:
        raise EstimateError("the lifting check needs a constant nonzero k")
    k = float(coeffs.k_constant)
    K, M = assemble_parts(mesh, coeffs, "dirichlet")
    F = assemble_volume_load(mesh, f, "dirichlet")
    # K and M share the mesh pattern, so the operators combine entrywise
    A = ComplexSparseMatrix(K.indptr, K.indices, K.data + 1j * k * M.data)
    u, _ = solve(A, F, solver)
    dt = T / steps
    S = ComplexSparseMatrix(K.indptr, K.indices, M.data + dt * K.data)
    v = u.copy()
    for n in range(1, steps + 1):
        rhs = M.matvec(v) + dt * np.exp(1j * k * n * dt) * F
        v, _ = solve(S, rhs, solver, x0=v)
    un = lp_norm(u, 2, mesh, location="node")
    gap = lp_norm(v - np.exp(1j * k * T) * u, 2, mesh, location="node")
    return gap / un if un > 0 else gap


# --- manufactured solutions ------------------------------------------------------------
def manufactured_sine(amplitude: complex = 1 + 0.5j, k: float = 5.0):
    """u* = a sin(pi x) sin(pi y) sin(pi z) on the unit cube with gamma = I and
    its source f = (3 pi^2 + i k) u*."""
    def exact(x):
        return amplitude * np.prod(np.sin(np.pi * x), axis=1)

    def source(x):
        return (3 * np.pi ** 2 + 1j * k) * exact(x)
    return exact, source


@dataclass(frozen=True)
class MMSRow:
    divisions: int
    h: float
    l2_error: float
    rate: float


def mms_convergence(exact: Callable, source: Callable, coeff_factory: Callable[[BoxMesh], CoefficientSet],
                    meshes: Sequence[BoxMesh], solver: SolverConfig = SolverConfig()) -> list:
    """L2 errors of the Dirichlet solution against ``exact`` on each mesh
    (3-point Gauss per axis) and observed rates between consecutive meshes."""
    rows = []
    prev = None
    for mesh in meshes:
        u = solve_load(mesh, coeff_factory(mesh), source, "dirichlet", solver)
        x, w = gauss_points(mesh, 3)
        err = values_at_gauss(mesh, u.values, 3) - np.asarray(exact(x.reshape(-1, 3))).reshape(x.shape[:2])
        e = float(np.sqrt(np.sum(w[None, :] * np.abs(err) ** 2)))
        if prev is None or prev[1] == 0 or e == 0:
            rate = float("nan")
        else:
            rate = math.log(prev[1] / e) / math.log(prev[0] / mesh.h)
        rows.append(MMSRow(int(mesh.divisions.max()), mesh.h, e, rate))
        prev = (mesh.h, e)
    return rows
