"""Legacy ASCII VTK output of DG fields and a reader for round trips.

Each element gets its own copy of its vertices so discontinuities survive.
Polygons with more than three vertices are split into a fan around the
centroid, which becomes an extra point of that element.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..mesh import Mesh
from ..quadrature import polygon_centroid

VTK_TRIANGLE = 5
VTK_TETRA = 10


def _sub_cells(mesh: Mesh):
    """Per-element points (list of (k, dim) arrays) and local simplex connectivity."""
    pts, conn = [], []
    for e in range(mesh.n_elements):
        P = mesh.element_points(e)
        k = len(P)
        if mesh.dim == 3 or k == 3:
            pts.append(P)
            conn.append([list(range(k))])
        else:
            pts.append(np.vstack([P, polygon_centroid(P)]))
            conn.append([[k, i, (i + 1) % k] for i in range(k)])
    return pts, conn


def _fmt(v):
    return "%.17g" % v


def write_vtk(mesh: Mesh, fields: dict, path, title="atrophydg"):
    """Write fields {name: (space, coeffs)} as point data at vertices plus cell means."""
    pts, conn = _sub_cells(mesh)
    offsets = np.cumsum([0] + [len(p) for p in pts])
    n_pts = int(offsets[-1])
    cells, parent = [], []
    for e, cl in enumerate(conn):
        for c in cl:
            cells.append([offsets[e] + i for i in c])
            parent.append(e)
    parent = np.array(parent, dtype=np.int64)
    ctype = VTK_TETRA if mesh.dim == 3 else VTK_TRIANGLE

    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {n_pts} double"]
    for P in pts:
        for x in P:
            xyz = list(x) + [0.0] * (3 - mesh.dim)
            out.append(" ".join(_fmt(v) for v in xyz))
    size = sum(len(c) + 1 for c in cells)
    out.append(f"CELLS {len(cells)} {size}")
    out += [" ".join(str(v) for v in [len(c)] + c) for c in cells]
    out.append(f"CELL_TYPES {len(cells)}")
    out += [str(ctype)] * len(cells)

    point_blocks, cell_blocks = [], []
    for name, (space, coeffs) in fields.items():
        if space.mesh is not mesh:
            raise ValueError(f"field {name!r} lives on a different mesh")
        vals = np.concatenate([space.eval_at(coeffs, [e], P[None])[0] for e, P in enumerate(pts)])
        means = space.element_means(coeffs)[parent]
        point_blocks.append(_data_block(name, vals))
        cell_blocks.append(_data_block(name, means))
    if point_blocks:
        out.append(f"POINT_DATA {n_pts}")
        for b in point_blocks:
            out += b
        out.append(f"CELL_DATA {len(cells)}")
        for b in cell_blocks:
            out += b
    Path(path).write_text("\n".join(out) + "\n")


def _data_block(name, vals):
    vals = np.asarray(vals)
    if vals.ndim == 1:
        return [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [_fmt(v) for v in vals]
    pad = np.zeros((len(vals), 3))
    pad[:, : vals.shape[1]] = vals
    return [f"VECTORS {name} double"] + [" ".join(_fmt(v) for v in row) for row in pad]


def read_vtk(path) -> dict:
    """Parse a file written by write_vtk.

    Returns points, cells, cell_types and point_data / cell_data dicts.
    """
    tok = Path(path).read_text().split("\n")
    i = 0
    res = {"point_data": {}, "cell_data": {}}
    section = None
    while i < len(tok):
        line = tok[i].strip()
        i += 1
        if not line:
            continue
        head = line.split()
        key = head[0]
        if key == "POINTS":
            n = int(head[1])
            res["points"] = np.array([[float(v) for v in tok[i + k].split()] for k in range(n)])
            i += n
        elif key == "CELLS":
            n = int(head[1])
            res["cells"] = [[int(v) for v in tok[i + k].split()[1:]] for k in range(n)]
            i += n
        elif key == "CELL_TYPES":
            n = int(head[1])
            res["cell_types"] = np.array([int(tok[i + k]) for k in range(n)])
            i += n
        elif key in ("POINT_DATA", "CELL_DATA"):
            section = "point_data" if key == "POINT_DATA" else "cell_data"
            count = int(head[1])
        elif key == "SCALARS":
            i += 1  # lookup table line
            res[section][head[1]] = np.array([float(tok[i + k]) for k in range(count)])
            i += count
        elif key == "VECTORS":
            res[section][head[1]] = np.array([[float(v) for v in tok[i + k].split()] for k in range(count)])
            i += count
    return res


def snapshot_fields(problem, state) -> dict:
    """Named fields of a coupled state for write_vtk."""
    return {"c": (problem.W, state.C), "g": (problem.Q, state.g), "u": (problem.V, state.U)}
