"""File formats: CSV tables with provenance headers, legacy VTK structured
points, Matrix Market coordinate complex."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .assembly import ComplexSparseMatrix
from .mesh import BoxMesh

__all__ = ["format_value", "write_csv", "read_csv_body", "write_vtk", "write_matrix_market"]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], header: Mapping[str, object]) -> Path:
    """Write ``# key: value`` provenance lines, a column line, then rows with
    floats at 17 significant digits."""
    path = Path(path)
    lines = [f"# {k}: {format_value(v)}" for k, v in header.items()]
    lines.append(",".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv_body(path) -> str:
    """Everything after the provenance header."""
    return "".join(l for l in Path(path).read_text().splitlines(keepends=True) if not l.startswith("#"))


def write_vtk(path, mesh: BoxMesh, values, name: str) -> Path:
    """Legacy ASCII STRUCTURED_POINTS file with one nodal scalar; nodes outside
    the mask are written as 0."""
    values = np.asarray(values, dtype=float)
    full = mesh.node_grid(values, fill=0.0)
    nx, ny, nz = mesh.node_shape
    head = [
        "# vtk DataFile Version 3.0",
        f"{name}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} {nz}",
        "ORIGIN " + " ".join(format_value(float(v)) for v in mesh.origin),
        "SPACING " + " ".join(format_value(float(v)) for v in mesh.spacing),
        f"POINT_DATA {full.size}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    body = "\n".join(format_value(float(v)) for v in full)
    path = Path(path)
    path.write_text("\n".join(head) + "\n" + body + "\n")
    return path


def write_matrix_market(path, A: ComplexSparseMatrix, comment: str = "") -> Path:
    """Coordinate complex general format, 1-based indices."""
    rows = np.repeat(np.arange(A.n), np.diff(A.indptr))
    out = ["%%MatrixMarket matrix coordinate complex general"]
    if comment:
        out.extend(f"% {line}" for line in comment.splitlines())
    out.append(f"{A.n} {A.n} {A.nnz}")
    out.extend(f"{i + 1} {j + 1} {v.real:.17g} {v.imag:.17g}"
               for i, j, v in zip(rows.tolist(), A.indices.tolist(), A.data.tolist()))
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path
