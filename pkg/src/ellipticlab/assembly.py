"""Q1 finite element discretisation of the sesquilinear form

    B[u, v] = sum over cells of  int grad(v)^T gamma grad(u) + (b_tilde u) . grad(v)
              + (b . grad u) v + c u v + i k u v

with 2x2x2 Gauss quadrature on every (constant-coefficient) cell.  Rows are
test functions, columns trial functions.  Dirichlet conditions eliminate the
boundary rows and columns, leaving identity rows; Neumann is the natural
condition and adds nothing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import kernels
from .coeffs import CoefficientSet
from .mesh import LOCAL_OFFSETS, BoxMesh

__all__ = ["ComplexSparseMatrix", "ComplexField", "IllPosedError", "assemble_form",
           "assemble_volume_load", "assemble_point_load", "assemble_parts", "stiffness_matrix", "mass_matrix",
           "element_matrices", "gauss_rule", "source_at_gauss", "gradient_at_gauss",
           "values_at_gauss", "BC"]

BC = ("dirichlet", "neumann")


class IllPosedError(ValueError):
    pass


# --- reference element ---------------------------------------------------------
def gauss_rule(order: int = 2):
    """Tensor Gauss rule on [0, 1]^3: points (nq, 3), weights (nq,), x fastest."""
    xi, wi = np.polynomial.legendre.leggauss(order)
    xi = 0.5 * (xi + 1.0)
    wi = 0.5 * wi
    z, y, x = np.meshgrid(xi, xi, xi, indexing="ij")
    wz, wy, wx = np.meshgrid(wi, wi, wi, indexing="ij")
    pts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    return pts, (wx * wy * wz).ravel()


def shape_functions(ref_pts):
    """Trilinear basis values (nq, 8) and reference gradients (nq, 3, 8)."""
    nq = ref_pts.shape[0]
    fac = np.where(LOCAL_OFFSETS[None, :, :] == 1, ref_pts[:, None, :], 1.0 - ref_pts[:, None, :])
    dfac = np.where(LOCAL_OFFSETS == 1, 1.0, -1.0)  # (8, 3)
    values = np.prod(fac, axis=2)
    grads = np.empty((nq, 3, 8))
    for d in range(3):
        others = [e for e in range(3) if e != d]
        grads[:, d, :] = dfac[None, :, d] * fac[:, :, others[0]] * fac[:, :, others[1]]
    return values, grads


class _Reference:
    """Per-spacing reference integrals, accumulated point by point so that
    every (a, b) block is the exact transpose of the (b, a) block."""

    def __init__(self, spacing, order=2):
        pts, w = gauss_rule(order)
        vol = float(np.prod(spacing))
        w = w * vol
        phi, dphi = shape_functions(pts)
        dphi = dphi / np.asarray(spacing)[None, :, None]
        self.weights = w
        self.phi = phi
        self.dphi = dphi
        self.K = np.zeros((3, 3, 8, 8))
        self.C = np.zeros((3, 8, 8))  # C[a, i, j] = int d_a phi_i * phi_j
        self.M = np.zeros((8, 8))
        for q in range(len(w)):
            for a in range(3):
                for b in range(3):
                    self.K[a, b] += w[q] * np.multiply.outer(dphi[q, a], dphi[q, b])
                self.C[a] += w[q] * np.multiply.outer(dphi[q, a], phi[q])
            self.M += w[q] * np.multiply.outer(phi[q], phi[q])


def _reference(mesh: BoxMesh) -> _Reference:
    ref = mesh.__dict__.get("_reference")
    if ref is None:
        ref = _Reference(mesh.spacing)
        mesh.__dict__["_reference"] = ref
    return ref


def element_matrices(mesh: BoxMesh, coeffs: CoefficientSet):
    """Real and imaginary parts of every cell matrix, each (n_cells, 8, 8)."""
    ref = _reference(mesh)
    g = coeffs.gamma
    real = np.zeros((mesh.n_cells, 8, 8))
    for a in range(3):
        real += g[:, a, a, None, None] * ref.K[a, a]
    for a in range(3):
        for b in range(a + 1, 3):
            real += g[:, a, b, None, None] * ref.K[a, b] + g[:, b, a, None, None] * ref.K[b, a]
    if coeffs.b is not None or coeffs.b_tilde is not None:
        bt = coeffs.b_tilde if coeffs.b_tilde is not None else np.zeros((mesh.n_cells, 3))
        bb = coeffs.b if coeffs.b is not None else np.zeros((mesh.n_cells, 3))
        for a in range(3):
            real += bt[:, a, None, None] * ref.C[a] + bb[:, a, None, None] * ref.C[a].T
    if coeffs.c is not None:
        real += coeffs.c[:, None, None] * ref.M
    imag = coeffs.k[:, None, None] * ref.M
    return real, imag


# --- sparse containers -----------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ComplexSparseMatrix:
    """Square complex matrix in compressed sparse row layout."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indptr", np.ascontiguousarray(self.indptr, dtype=np.int64))
        object.__setattr__(self, "indices", np.ascontiguousarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "data", np.ascontiguousarray(self.data, dtype=np.complex128))

    @property
    def n(self) -> int:
        return self.indptr.size - 1

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def nnz(self) -> int:
        return self.data.size

    def matvec(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.complex128)
        if x.shape != (self.n,):
            raise ValueError(f"vector of length {x.size} does not match dimension {self.n}")
        return kernels.csr_matvec(self.indptr, self.indices, self.data, x)

    def __matmul__(self, x):
        return self.matvec(x)

    def diagonal(self) -> np.ndarray:
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        out = np.zeros(self.n, dtype=np.complex128)
        on = rows == self.indices
        out[rows[on]] = self.data[on]
        return out

    def to_scipy(self):
        from scipy import sparse
        return sparse.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.complex128)
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        out[rows, self.indices] = self.data
        return out

    @classmethod
    def from_scipy(cls, m) -> "ComplexSparseMatrix":
        m = m.tocsr()
        m.sort_indices()
        return cls(m.indptr, m.indices, m.data)

    def transpose(self) -> "ComplexSparseMatrix":
        return ComplexSparseMatrix.from_scipy(self.to_scipy().T)

    def conj_transpose(self) -> "ComplexSparseMatrix":
        t = self.transpose()
        return ComplexSparseMatrix(t.indptr, t.indices, np.conj(t.data))

    @property
    def structurally_symmetric(self) -> bool:
        t = self.transpose()
        return bool(np.array_equal(t.indptr, self.indptr) and np.array_equal(t.indices, self.indices))

    def is_sorted(self) -> bool:
        d = np.diff(self.indices)
        row_start = np.zeros(self.nnz, dtype=bool)
        row_start[self.indptr[:-1][np.diff(self.indptr) > 0]] = True
        return bool(np.all((d > 0) | row_start[1:]))

    def equals(self, other: "ComplexSparseMatrix") -> bool:
        """Bitwise equality of structure and values."""
        return (np.array_equal(self.indptr, other.indptr) and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.data, other.data))


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex nodal values on the active nodes of a mesh."""

    values: np.ndarray
    mesh: BoxMesh
    bc: str = "neumann"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != (self.mesh.n_nodes,):
            raise ValueError(f"field has {v.size} values, mesh has {self.mesh.n_nodes} active nodes")
        if self.bc not in BC:
            raise ValueError(f"bc must be one of {BC}")
        object.__setattr__(self, "values", v)

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self):
        return self.values.size


# --- global assembly ---------------------------------------------------------------
class _Pattern:
    """Sparsity pattern of the mesh: permutation of the cell-major COO list into
    row-major order (stable, so duplicates stay in cell order)."""

    def __init__(self, mesh: BoxMesh):
        n = mesh.n_nodes
        cn = mesh.cell_nodes
        rows = np.broadcast_to(cn[:, :, None], (mesh.n_cells, 8, 8)).ravel()
        cols = np.broadcast_to(cn[:, None, :], (mesh.n_cells, 8, 8)).ravel()
        keys = rows * n + cols
        self.perm = np.argsort(keys, kind="stable")
        sk = keys[self.perm]
        self.starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]]).astype(np.int64)
        uk = sk[self.starts]
        self.rows = uk // n
        self.cols = uk % n
        self.n = n


def _pattern(mesh: BoxMesh) -> _Pattern:
    pat = mesh.__dict__.get("_pattern")
    if pat is None:
        pat = _Pattern(mesh)
        mesh.__dict__["_pattern"] = pat
    return pat


def _assemble(mesh: BoxMesh, real: np.ndarray, imag, bc: str) -> ComplexSparseMatrix:
    if bc not in BC:
        raise ValueError(f"bc must be one of {BC}, got {bc!r}")
    pat = _pattern(mesh)
    vals = real.astype(np.complex128).ravel() if imag is None else (real + 1j * imag).ravel()
    summed = kernels.segment_sum(np.ascontiguousarray(vals[pat.perm]), pat.starts)
    rows, cols = pat.rows, pat.cols
    if bc == "dirichlet":
        bnd = mesh.boundary
        keep = ~(bnd[rows] | bnd[cols])
        diag_b = bnd[rows] & (rows == cols)
        summed = np.where(diag_b, 1.0 + 0j, summed)
        keep |= diag_b
        rows, cols, summed = rows[keep], cols[keep], summed[keep]
    indptr = np.zeros(pat.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=pat.n), out=indptr[1:])
    return ComplexSparseMatrix(indptr, cols, summed)


def assemble_form(mesh: BoxMesh, coeffs: CoefficientSet, bc: str = "dirichlet") -> ComplexSparseMatrix:
    """Global matrix of B with the given boundary condition."""
    if coeffs.n_cells != mesh.n_cells:
        raise ValueError("coefficient set does not match the mesh")
    coeffs.nu  # ellipticity precondition
    if bc == "neumann" and not np.any(coeffs.k != 0):
        raise IllPosedError("Neumann problem with k = 0 everywhere: constants span the kernel")
    real, imag = element_matrices(mesh, coeffs)
    return _assemble(mesh, real, imag, bc)


def assemble_parts(mesh: BoxMesh, coeffs: CoefficientSet, bc: str = "dirichlet"):
    """Split form for constant k: ``(K, M)`` with ``A = K + i k M``.

    ``K`` carries every term except ``i k u v``; ``M`` is the unit mass matrix.
    """
    ref = _reference(mesh)
    real, _ = element_matrices(mesh, coeffs)
    mass = np.broadcast_to(ref.M, (mesh.n_cells, 8, 8))
    return _assemble(mesh, real, None, bc), _assemble(mesh, np.ascontiguousarray(mass), None, bc)


def stiffness_matrix(mesh: BoxMesh, gamma=None, bc: str = "neumann") -> ComplexSparseMatrix:
    """Matrix of int grad(v)^T gamma grad(u) (gamma = I by default), no zero-order term."""
    ref = _reference(mesh)
    if gamma is None:
        real = np.broadcast_to(ref.K[0, 0] + ref.K[1, 1] + ref.K[2, 2], (mesh.n_cells, 8, 8))
    else:
        real, _ = element_matrices(mesh, CoefficientSet(gamma=gamma, k=0.0))
    return _assemble(mesh, np.ascontiguousarray(real), None, bc)


def mass_matrix(mesh: BoxMesh, weight=None, bc: str = "neumann") -> ComplexSparseMatrix:
    """Matrix of int w u v for a per-cell weight w (default 1)."""
    ref = _reference(mesh)
    w = np.ones(mesh.n_cells) if weight is None else np.broadcast_to(np.asarray(weight, float), (mesh.n_cells,))
    return _assemble(mesh, w[:, None, None] * ref.M, None, bc)


# --- loads -------------------------------------------------------------------------
SourceLike = Union[complex, float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def gauss_points(mesh: BoxMesh, order: int = 2):
    """Physical quadrature points (n_cells, nq, 3) and weights (nq,)."""
    pts, w = gauss_rule(order)
    lower = mesh.cell_centers - 0.5 * mesh.spacing
    return lower[:, None, :] + pts[None, :, :] * mesh.spacing, w * mesh.cell_volume


def source_at_gauss(mesh: BoxMesh, f: SourceLike, order: int = 2) -> np.ndarray:
    """Source values at the quadrature points, (n_cells, nq) complex.

    ``f`` may be a scalar, a per-cell array, or a callable taking an (N, 3)
    array of points.
    """
    nq = order ** 3
    if callable(f):
        x, _ = gauss_points(mesh, order)
        vals = np.asarray(f(x.reshape(-1, 3)), dtype=np.complex128).reshape(mesh.n_cells, nq)
    else:
        arr = np.asarray(f, dtype=np.complex128)
        if arr.ndim == 0:
            vals = np.full((mesh.n_cells, nq), complex(arr))
        elif arr.shape == (mesh.n_cells,):
            vals = np.repeat(arr[:, None], nq, axis=1)
        elif arr.shape == (mesh.n_cells, nq):
            vals = arr.copy()
        else:
            raise ValueError(f"cannot interpret source of shape {arr.shape}")
    if not np.all(np.isfinite(vals)):
        raise ValueError("source is not finite at every quadrature point")
    return vals


def values_at_gauss(mesh: BoxMesh, nodal, order: int = 2) -> np.ndarray:
    """Q1 interpolant of nodal values at quadrature points, (n_cells, nq)."""
    pts, _ = gauss_rule(order)
    phi, _ = shape_functions(pts)
    return np.asarray(nodal)[mesh.cell_nodes] @ phi.T


def gradient_at_gauss(mesh: BoxMesh, nodal, order: int = 2) -> np.ndarray:
    """Gradient of the Q1 interpolant at quadrature points, (n_cells, nq, 3)."""
    pts, _ = gauss_rule(order)
    _, dphi = shape_functions(pts)
    dphi = dphi / mesh.spacing[None, :, None]
    return np.einsum("ci,qdi->cqd", np.asarray(nodal)[mesh.cell_nodes], dphi)


def _scatter(mesh: BoxMesh, local: np.ndarray) -> np.ndarray:
    idx = mesh.cell_nodes.ravel()
    re = np.bincount(idx, weights=local.real.ravel(), minlength=mesh.n_nodes)
    im = np.bincount(idx, weights=local.imag.ravel(), minlength=mesh.n_nodes)
    return re + 1j * im


def assemble_volume_load(mesh: BoxMesh, f: SourceLike, bc: str = "neumann") -> np.ndarray:
    """Vector of int f phi_i by the assembly quadrature."""
    ref = _reference(mesh)
    fq = source_at_gauss(mesh, f)
    local = (fq * ref.weights[None, :]) @ ref.phi  # (n_cells, 8)
    load = _scatter(mesh, local)
    if bc == "dirichlet":
        load[mesh.boundary] = 0.0
    elif bc != "neumann":
        raise ValueError(f"bc must be one of {BC}, got {bc!r}")
    return load


def assemble_point_load(mesh: BoxMesh, y: int, bc: str = "dirichlet") -> np.ndarray:
    """Discrete delta at node ``y``: the unit vector e_y."""
    y = int(y)
    if not 0 <= y < mesh.n_nodes:
        raise IndexError(f"node {y} is not an active node")
    if bc == "dirichlet" and mesh.boundary[y]:
        raise ValueError(f"node {y} lies on the Dirichlet boundary; G(., y) is undefined there")
    e = np.zeros(mesh.n_nodes, dtype=np.complex128)
    e[y] = 1.0
    return e
