"""Structured hexahedral meshes over axis-aligned boxes.

Nodes and cells are numbered lexicographically with x running fastest.  An
optional cell mask carves out non-convex Lipschitz domains (L-shapes, boxes
with cubic holes); only nodes touched by an active cell are kept as unknowns.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

__all__ = ["BoxMesh", "MeshError", "build_box_mesh", "ball_nodes", "named_mask",
           "MASKS"]

# local node (a, b, c) of a cell has local index a + 2b + 4c
LOCAL_OFFSETS = np.array([[a, b, c] for c in (0, 1) for b in (0, 1) for a in (0, 1)])

# relative slack for closed ball membership tests
_BALL_RTOL = 1e-12

MaskLike = Union[None, np.ndarray, Callable[[np.ndarray], np.ndarray]]


class MeshError(ValueError):
    pass


class BoxMesh:
    """Masked structured grid of trilinear hexahedra.

    Attributes
    ----------
    origin, extent : (3,) float arrays
    divisions : (3,) int array, cells per axis
    spacing : (3,) float array
    cell_active : (ncells_total,) bool, indexed by grid cell id
    active_cells : grid ids of active cells, increasing
    cell_nodes : (n_cells, 8) active-node indices of every active cell
    node_ids : grid ids of active nodes, increasing
    points : (n_nodes, 3) active node coordinates
    boundary : (n_nodes,) bool
    """

    def __init__(self, origin, extent, divisions, cell_active=None):
        self.origin = np.asarray(origin, dtype=float).reshape(3)
        self.extent = np.asarray(extent, dtype=float).reshape(3)
        self.divisions = np.asarray(divisions, dtype=np.int64).reshape(3)
        if np.any(self.divisions < 1):
            raise MeshError(f"divisions must be >= 1 per axis, got {self.divisions.tolist()}")
        if not np.all(self.extent > 0):
            raise MeshError(f"extent must be > 0 per axis, got {self.extent.tolist()}")
        self.spacing = self.extent / self.divisions
        nx, ny, nz = (int(d) for d in self.divisions)
        self.node_shape = (nx + 1, ny + 1, nz + 1)
        ncells = nx * ny * nz
        if cell_active is None:
            cell_active = np.ones(ncells, dtype=bool)
        cell_active = np.asarray(cell_active, dtype=bool).reshape(-1)
        if cell_active.size != ncells:
            raise MeshError(f"mask has {cell_active.size} entries, expected {ncells}")
        self.cell_active = cell_active
        self._check_connected()

        self.active_cells = np.flatnonzero(cell_active)
        ci, cj, ck = self.cell_ijk(self.active_cells)
        base = ci + (nx + 1) * (cj + (ny + 1) * ck)
        off = LOCAL_OFFSETS[:, 0] + (nx + 1) * (LOCAL_OFFSETS[:, 1] + (ny + 1) * LOCAL_OFFSETS[:, 2])
        grid_cell_nodes = base[:, None] + off[None, :]

        nnodes_total = (nx + 1) * (ny + 1) * (nz + 1)
        used = np.zeros(nnodes_total, dtype=bool)
        used[grid_cell_nodes.ravel()] = True
        self.node_ids = np.flatnonzero(used)
        self._grid_to_active = np.full(nnodes_total, -1, dtype=np.int64)
        self._grid_to_active[self.node_ids] = np.arange(self.node_ids.size)
        self.cell_nodes = self._grid_to_active[grid_cell_nodes]

        ii = self.node_ids % (nx + 1)
        jj = (self.node_ids // (nx + 1)) % (ny + 1)
        kk = self.node_ids // ((nx + 1) * (ny + 1))
        self.node_ijk = np.stack([ii, jj, kk], axis=1)
        self.points = self.origin + self.node_ijk * self.spacing
        self.boundary = self._classify_boundary()
        self._tree = None
        self._boundary_tree = None

    # --- sizes -----------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return int(self.node_ids.size)

    @property
    def n_cells(self) -> int:
        return int(self.active_cells.size)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return self.n_cells * self.cell_volume

    @property
    def h(self) -> float:
        """Largest spacing."""
        return float(self.spacing.max())

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary

    @property
    def is_masked(self) -> bool:
        return not bool(self.cell_active.all())

    # --- index helpers ---------------------------------------------------
    def cell_ijk(self, cell_ids):
        nx, ny, _ = (int(d) for d in self.divisions)
        cell_ids = np.asarray(cell_ids)
        return cell_ids % nx, (cell_ids // nx) % ny, cell_ids // (nx * ny)

    @property
    def cell_centers(self) -> np.ndarray:
        ci, cj, ck = self.cell_ijk(self.active_cells)
        ijk = np.stack([ci, cj, ck], axis=1) + 0.5
        return self.origin + ijk * self.spacing

    def position(self, i) -> np.ndarray:
        return self.points[i]

    def index_of(self, x, atol: Optional[float] = None) -> int:
        """Active node index at coordinate ``x``; raises if no node is there."""
        x = np.asarray(x, dtype=float).reshape(3)
        ijk = np.rint((x - self.origin) / self.spacing).astype(np.int64)
        if atol is None:
            atol = 1e-9 * self.h
        if np.any(ijk < 0) or np.any(ijk >= np.array(self.node_shape)):
            raise MeshError(f"point {x.tolist()} is outside the mesh box")
        if np.linalg.norm(self.origin + ijk * self.spacing - x) > atol:
            raise MeshError(f"point {x.tolist()} is not a mesh node")
        nx, ny, _ = (int(d) for d in self.divisions)
        g = ijk[0] + (nx + 1) * (ijk[1] + (ny + 1) * ijk[2])
        a = int(self._grid_to_active[g])
        if a < 0:
            raise MeshError(f"node at {x.tolist()} is not active")
        return a

    def nearest_node(self, x) -> int:
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return int(self._tree.query(np.asarray(x, dtype=float))[1])

    def distance_to_boundary(self, x=None) -> np.ndarray:
        """Distance from points (default: all nodes) to the nearest boundary node."""
        if self._boundary_tree is None:
            self._boundary_tree = cKDTree(self.points[self.boundary])
        pts = self.points if x is None else np.atleast_2d(x)
        return self._boundary_tree.query(pts)[0]

    def node_grid(self, values, fill=0.0) -> np.ndarray:
        """Scatter active-node values onto the full (nx+1, ny+1, nz+1) grid, x fastest."""
        values = np.asarray(values)
        full = np.full(int(np.prod(self.node_shape)), fill, dtype=values.dtype)
        full[self.node_ids] = values
        return full

    # --- construction checks ---------------------------------------------
    def _check_connected(self):
        nx, ny, nz = (int(d) for d in self.divisions)
        if not self.cell_active.any():
            raise MeshError("mask leaves no active cell")
        grid = self.cell_active.reshape(nz, ny, nx)
        labels, ncomp = ndimage.label(grid)  # default structure is face connectivity
        if ncomp > 1:
            flat = labels.reshape(-1)
            first = flat[np.flatnonzero(self.cell_active)[0]]
            bad = int(np.flatnonzero(self.cell_active & (flat != first))[0])
            i, j, k = (int(v) for v in self.cell_ijk(bad))
            raise MeshError(
                f"active cells are not face-connected: cell {bad} (i={i}, j={j}, k={k}) "
                f"is disconnected from cell {int(np.flatnonzero(self.cell_active)[0])}")

    def _classify_boundary(self) -> np.ndarray:
        nx, ny, nz = (int(d) for d in self.divisions)
        act = self.cell_active.reshape(nz, ny, nx)
        padded = np.zeros((nz + 2, ny + 2, nx + 2), dtype=bool)
        padded[1:-1, 1:-1, 1:-1] = act
        ci, cj, ck = self.cell_ijk(self.active_cells)
        flags = np.zeros(self.n_nodes, dtype=bool)
        # (axis, side): neighbour offset and the local nodes on that face
        for axis in range(3):
            for side in (0, 1):
                d = [0, 0, 0]
                d[axis] = 1 if side else -1
                nb = padded[ck + 1 + d[2], cj + 1 + d[1], ci + 1 + d[0]]
                exposed = ~nb
                local = np.flatnonzero(LOCAL_OFFSETS[:, axis] == side)
                flags[self.cell_nodes[exposed][:, local].ravel()] = True
        return flags

    def __repr__(self):
        return (f"BoxMesh(origin={self.origin.tolist()}, extent={self.extent.tolist()}, "
                f"divisions={self.divisions.tolist()}, cells={self.n_cells}, nodes={self.n_nodes})")


def _grid_cell_centers(origin, extent, divisions):
    origin = np.asarray(origin, float)
    h = np.asarray(extent, float) / np.asarray(divisions)
    nx, ny, nz = (int(d) for d in divisions)
    k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    ijk = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1) + 0.5
    return origin + ijk * h


def build_box_mesh(origin: Sequence[float], extent: Sequence[float], divisions: Sequence[int],
                   mask: MaskLike = None) -> BoxMesh:
    """Build a mesh over ``[origin, origin + extent]``.

    ``mask`` is either a boolean array over all grid cells (lexicographic, x
    fastest) or a predicate mapping an ``(N, 3)`` array of cell centres to a
    boolean array (True keeps the cell).
    """
    divisions = np.asarray(divisions, dtype=np.int64).reshape(3)
    if np.any(divisions < 1):
        raise MeshError(f"divisions must be >= 1 per axis, got {divisions.tolist()}")
    if not np.all(np.asarray(extent, float) > 0):
        raise MeshError(f"extent must be > 0 per axis, got {list(extent)}")
    active = None
    if callable(mask):
        active = np.asarray(mask(_grid_cell_centers(origin, extent, divisions)), dtype=bool)
    elif mask is not None:
        active = np.asarray(mask, dtype=bool)
    return BoxMesh(origin, extent, divisions, active)


def ball_nodes(mesh: BoxMesh, center, radius: float) -> np.ndarray:
    """Active node indices with ``|x - center| <= radius``, sorted."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=float).reshape(3)
    d2 = np.sum((mesh.points - center) ** 2, axis=1)
    return np.flatnonzero(d2 <= radius * radius * (1 + _BALL_RTOL))


# --- named masks used by the experiment runner ---------------------------
def _l_shape(origin, extent):
    mid = np.asarray(origin, float) + 0.5 * np.asarray(extent, float)

    def keep(c):
        return ~np.all(c > mid, axis=1)
    return keep


def _cube_hole(origin, extent, fraction=0.25):
    lo = np.asarray(origin, float) + (0.5 - fraction / 2) * np.asarray(extent, float)
    hi = np.asarray(origin, float) + (0.5 + fraction / 2) * np.asarray(extent, float)

    def keep(c):
        return ~np.all((c > lo) & (c < hi), axis=1)
    return keep


MASKS = {"none": None, "l_shape": _l_shape, "cube_hole": _cube_hole}


def named_mask(name: str, origin, extent):
    """Predicate for a named mask: ``none``, ``l_shape`` (upper octant removed)
    or ``cube_hole`` (centred cube of a quarter of the extent removed)."""
    try:
        factory = MASKS[name]
    except KeyError:
        raise MeshError(f"unknown mask {name!r}; choose from {sorted(MASKS)}") from None
    return None if factory is None else factory(origin, extent)
