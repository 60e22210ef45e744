"""Coefficient data of the operator

    L u = -div(gamma grad u + b_tilde u) + b . grad u + c u + i k u

stored piecewise constant per active cell, with the ellipticity certificate,
the mean-oscillation functional of a variable ``k`` and builtin test patterns.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .mesh import BoxMesh

__all__ = ["CoefficientSet", "EllipticityError", "OscillationReport", "OscillationSample",
           "verify_ellipticity", "oscillation_seminorm", "pattern", "PATTERNS",
           "read_coefficient_table", "write_coefficient_table"]


class EllipticityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Per-cell coefficients over the active cells of a mesh.

    ``k`` is always stored per cell; ``k_constant`` holds the value when the
    constant variant was requested (and is None for a genuine field).
    """

    gamma: np.ndarray                     # (n_cells, 3, 3) real
    k: np.ndarray                         # (n_cells,) real
    k_constant: Optional[float] = None
    b: Optional[np.ndarray] = None        # (n_cells, 3)
    b_tilde: Optional[np.ndarray] = None  # (n_cells, 3)
    c: Optional[np.ndarray] = None        # (n_cells,)
    _nu: Optional[float] = field(default=None, repr=False)

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim != 3 or g.shape[1:] != (3, 3):
            raise ValueError(f"gamma must have shape (n_cells, 3, 3), got {g.shape}")
        n = g.shape[0]
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "k", _cellwise(self.k, n, "k"))
        for name, shape in (("b", (n, 3)), ("b_tilde", (n, 3)), ("c", (n,))):
            v = getattr(self, name)
            if v is not None:
                v = np.broadcast_to(np.asarray(v, dtype=float), shape).copy()
                object.__setattr__(self, name, v)
        if self.k_constant is not None:
            if self.k_constant == 0:
                raise ValueError("constant k must be nonzero")
            if not np.all(self.k == self.k_constant):
                raise ValueError("k_constant disagrees with the stored k field")

    @property
    def n_cells(self) -> int:
        return self.gamma.shape[0]

    @property
    def nu(self) -> float:
        if self._nu is None:
            object.__setattr__(self, "_nu", verify_ellipticity(self))
        return self._nu

    @property
    def has_lower_order(self) -> bool:
        return any(v is not None for v in (self.b, self.b_tilde, self.c))

    @property
    def lower_order_bound(self) -> float:
        """M = max over cells of |b| + |b_tilde| + |c|."""
        total = np.zeros(self.n_cells)
        if self.b is not None:
            total += np.linalg.norm(self.b, axis=1)
        if self.b_tilde is not None:
            total += np.linalg.norm(self.b_tilde, axis=1)
        if self.c is not None:
            total += np.abs(self.c)
        return float(total.max()) if total.size else 0.0

    @property
    def k_is_constant(self) -> bool:
        return self.k_constant is not None

    def with_k(self, k) -> "CoefficientSet":
        """Same coefficients with ``k`` replaced (scalar -> constant variant)."""
        if np.ndim(k) == 0:
            k = float(k)
            return replace(self, k=np.full(self.n_cells, k), k_constant=k, _nu=self._nu)
        return replace(self, k=np.asarray(k, float), k_constant=None, _nu=self._nu)

    def adjoint(self) -> "CoefficientSet":
        """Coefficients of L*: gamma^T, -k, first-order fields swapped."""
        kc = None if self.k_constant is None else -self.k_constant
        return CoefficientSet(
            gamma=np.ascontiguousarray(np.swapaxes(self.gamma, 1, 2)),
            k=-self.k, k_constant=kc, b=self.b_tilde, b_tilde=self.b, c=self.c, _nu=self._nu)


def _cellwise(value, n, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must be scalar or have shape ({n},), got {arr.shape}")
    return arr.copy()


def verify_ellipticity(coeffs: CoefficientSet) -> float:
    """Largest nu in (0, 1] with nu|xi|^2 <= Re conj(xi)^T gamma xi and |gamma| <= 1/nu.

    Re conj(xi)^T gamma xi only sees the symmetric part of a real gamma, so the
    test is min eigenvalue of (gamma + gamma^T)/2 together with the spectral norm.
    """
    g = coeffs.gamma
    uniq, inverse = np.unique(g.reshape(g.shape[0], 9), axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    mats = uniq.reshape(-1, 3, 3)
    lam = np.linalg.eigvalsh(0.5 * (mats + np.swapaxes(mats, 1, 2)))[:, 0]
    norm = np.linalg.norm(mats, ord=2, axis=(1, 2))
    bad = np.flatnonzero(lam[inverse] <= 0)
    if bad.size:
        cell = int(bad[0])
        raise EllipticityError(
            f"symmetric part of gamma is not positive definite on cell {cell} "
            f"(min eigenvalue {lam[inverse][cell]:.6g})")
    nu = float(np.minimum(lam, 1.0 / norm).min())
    return min(nu, 1.0)


# --- oscillation functional -------------------------------------------------
@dataclass(frozen=True)
class OscillationSample:
    center: int
    radius: float
    mean: float
    value: float
    n_cells: int
    skipped: bool


@dataclass(frozen=True)
class OscillationReport:
    r_o: float
    q: float
    kappa_o: float
    samples: tuple

    @property
    def skipped(self):
        return [s for s in self.samples if s.skipped]


def _cells_meeting_ball(mesh: BoxMesh, center, radius):
    lo = mesh.cell_centers - 0.5 * mesh.spacing
    hi = lo + mesh.spacing
    nearest = np.clip(center, lo, hi)
    return np.flatnonzero(np.sum((nearest - center) ** 2, axis=1) < radius * radius)


def oscillation_seminorm(k_field, mesh: BoxMesh, r_o: float, q: float,
                         sample_centers: Sequence[int], radii: Sequence[float]) -> OscillationReport:
    """Sampled sup over balls of r^2 (mean_{B_r} |k - mean_{B_r} k|^q)^(1/q).

    Balls are discretised by the active cells they meet (positive-measure
    intersection of the cell box with the open ball), each weighted by its
    volume.  The sampled value is a lower bound for the true supremum.
    """
    if not q > 1.5:
        raise ValueError(f"q must exceed n/2 = 1.5, got {q}")
    k_field = np.asarray(k_field, dtype=float)
    if k_field.shape != (mesh.n_cells,):
        raise ValueError("k_field must hold one value per active cell")
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii):
        raise ValueError("radii must be positive")
    if any(r > r_o * (1 + 1e-12) for r in radii):
        raise ValueError(f"radii must not exceed r_o = {r_o}")
    samples = []
    for node in sample_centers:
        x0 = mesh.points[int(node)]
        for r in radii:
            cells = _cells_meeting_ball(mesh, x0, r)
            if cells.size == 0:
                samples.append(OscillationSample(int(node), r, float("nan"), float("nan"), 0, True))
                continue
            vals = k_field[cells]
            mean = float(vals.mean())  # uniform cell volumes
            osc = float(np.mean(np.abs(vals - mean) ** q) ** (1.0 / q))
            samples.append(OscillationSample(int(node), r, mean, r * r * osc, int(cells.size), False))
    used = [s.value for s in samples if not s.skipped]
    kappa = max(used) if used else 0.0
    return OscillationReport(r_o=float(r_o), q=float(q), kappa_o=float(kappa), samples=tuple(samples))


# --- builtin patterns --------------------------------------------------------
def _as_matrix(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return a * np.eye(3)
    if a.shape == (3,):
        return np.diag(a)
    if a.shape == (3, 3):
        return a
    raise ValueError(f"cannot interpret {v!r} as a 3x3 coefficient")


def _rotation(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    kx = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * kx @ kx


def _identity(centers):
    return np.broadcast_to(np.eye(3), (len(centers), 3, 3)).copy()


def _checkerboard(centers, origin, gamma_lo=1.0, gamma_hi=100.0, block=0.125):
    idx = np.floor((centers - origin) / block + 1e-9).astype(np.int64)
    hi = (idx.sum(axis=1) % 2) == 1
    out = np.empty((len(centers), 3, 3))
    out[:] = _as_matrix(gamma_lo)
    out[hi] = _as_matrix(gamma_hi)
    return out


def _sphere_inclusion(centers, origin, center=(0.5, 0.5, 0.5), radius=0.25,
                      gamma_in=10.0, gamma_out=1.0):
    inside = np.sum((centers - np.asarray(center, float)) ** 2, axis=1) <= radius * radius
    out = np.empty((len(centers), 3, 3))
    out[:] = _as_matrix(gamma_out)
    out[inside] = _as_matrix(gamma_in)
    return out


def _rotated_aniso(centers, origin, axis=(0.0, 0.0, 1.0), angle=0.0, lambdas=(1.0, 1.0, 1.0)):
    r = _rotation(axis, angle)
    g = r @ np.diag(np.asarray(lambdas, float)) @ r.T
    return np.broadcast_to(g, (len(centers), 3, 3)).copy()


PATTERNS = {
    "identity": lambda centers, origin: _identity(centers),
    "checkerboard": _checkerboard,
    "sphere_inclusion": _sphere_inclusion,
    "rotated_aniso": _rotated_aniso,
}

FieldLike = Union[None, float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def _eval_field(value, centers, shape):
    if value is None:
        return None
    if callable(value):
        value = value(centers)
    return np.broadcast_to(np.asarray(value, dtype=float), shape).copy()


def pattern(name: str, mesh: BoxMesh, k: FieldLike = 1.0, b: FieldLike = None,
            b_tilde: FieldLike = None, c: FieldLike = None, **params) -> CoefficientSet:
    """Coefficient set with gamma from a named pattern evaluated at cell centres.

    Patterns: ``identity``; ``checkerboard(gamma_lo, gamma_hi, block)`` with
    cubic blocks of side ``block``; ``sphere_inclusion(center, radius,
    gamma_in, gamma_out)``; ``rotated_aniso(axis, angle, lambdas)``.  Scalar
    gammas mean multiples of the identity.  ``k`` is a nonzero scalar
    (constant variant), a per-cell array, or a callable of cell centres.
    """
    try:
        fn = PATTERNS[name]
    except KeyError:
        raise ValueError(f"unknown pattern {name!r}; choose from {sorted(PATTERNS)}") from None
    centers = mesh.cell_centers
    if name == "identity":
        if params:
            raise TypeError(f"identity pattern takes no parameters, got {sorted(params)}")
        gamma = fn(centers, mesh.origin)
    else:
        gamma = fn(centers, mesh.origin, **params)
    n = mesh.n_cells
    if np.ndim(k) == 0 and not callable(k):
        kc = float(k)
        kf = np.full(n, kc)
    else:
        kc = None
        kf = _eval_field(k, centers, (n,))
    coeffs = CoefficientSet(gamma=gamma, k=kf, k_constant=kc,
                            b=_eval_field(b, centers, (n, 3)),
                            b_tilde=_eval_field(b_tilde, centers, (n, 3)),
                            c=_eval_field(c, centers, (n,)))
    coeffs.nu  # raises EllipticityError early
    return coeffs


# --- plain-text per-cell table -------------------------------------------------
TABLE_COLUMNS = (["cell"] + [f"g{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)] + ["k"]
                 + ["b1", "b2", "b3", "bt1", "bt2", "bt3", "c"])


def write_coefficient_table(path, mesh: BoxMesh, coeffs: CoefficientSet) -> None:
    """Write one row per active cell: grid cell id, gamma row-major, k, then
    b, b_tilde, c when any lower-order field is present."""
    cols = [mesh.active_cells[:, None].astype(float), coeffs.gamma.reshape(-1, 9), coeffs.k[:, None]]
    ncol = 11
    if coeffs.has_lower_order:
        zeros3 = np.zeros((coeffs.n_cells, 3))
        cols += [coeffs.b if coeffs.b is not None else zeros3,
                 coeffs.b_tilde if coeffs.b_tilde is not None else zeros3,
                 (coeffs.c if coeffs.c is not None else np.zeros(coeffs.n_cells))[:, None]]
        ncol = 18
    data = np.hstack(cols)
    header = " ".join(TABLE_COLUMNS[:ncol])
    fmt = ["%d"] + ["%.17g"] * (ncol - 1)
    np.savetxt(path, data, fmt=fmt, header=header)


def read_coefficient_table(path, mesh: BoxMesh) -> CoefficientSet:
    """Read a table written by :func:`write_coefficient_table` (11 or 18 columns)."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] not in (11, 18):
        raise ValueError(f"{path}: expected 11 or 18 columns, got {data.shape[1]}")
    ids = data[:, 0].astype(np.int64)
    pos = np.searchsorted(mesh.active_cells, ids)
    pos = np.clip(pos, 0, mesh.n_cells - 1)
    bad = np.flatnonzero(mesh.active_cells[pos] != ids)
    if bad.size:
        raise ValueError(f"{path}: row {int(bad[0]) + 1} names cell {ids[bad[0]]}, which is not active")
    if np.unique(ids).size != ids.size or ids.size != mesh.n_cells:
        raise ValueError(f"{path}: every active cell must appear exactly once")
    order = np.argsort(pos)
    data = data[order]
    gamma = data[:, 1:10].reshape(-1, 3, 3)
    k = data[:, 10]
    kc = float(k[0]) if np.all(k == k[0]) and k[0] != 0 else None
    kwargs = {}
    if data.shape[1] == 18:
        kwargs = dict(b=data[:, 11:14], b_tilde=data[:, 14:17], c=data[:, 17])
    coeffs = CoefficientSet(gamma=gamma, k=k, k_constant=kc, **kwargs)
    coeffs.nu
    return coeffs
