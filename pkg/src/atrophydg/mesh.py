"""Polytopal meshes: construction, face connectivity and boundary classification.

Two-dimensional meshes hold arbitrary star-shaped polygons (triangles, quads,
agglomerates); three-dimensional meshes hold tetrahedra. Every face stores a
single unit normal pointing from its plus element into its minus element, or
outward on the boundary.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .quadrature import polygon_centroid, polygon_fan


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Element:
    vertex_ids: tuple
    measure: float
    diameter: float
    centroid: np.ndarray
    bbox: np.ndarray  # (2, dim): lower and upper corner


@dataclass(frozen=True)
class Face:
    vertex_ids: tuple
    normal: np.ndarray
    measure: float
    plus_element: int
    minus_element: Optional[int] = None
    tag: Optional[str] = None

    @property
    def is_boundary(self) -> bool:
        return self.minus_element is None

    @property
    def kind(self) -> str:
        return "boundary" if self.is_boundary else "interior"


@dataclass(frozen=True)
class FacePartition:
    interior: np.ndarray
    dirichlet: np.ndarray
    neumann: np.ndarray

    @property
    def penalized(self) -> np.ndarray:
        """Faces carrying penalty and consistency terms (interior + Dirichlet)."""
        return np.concatenate([self.interior, self.dirichlet])


def _simplex_measure(pts):
    k = len(pts) - 1
    J = (pts[1:] - pts[0]).T
    if k == J.shape[0]:
        return abs(np.linalg.det(J)) / np.prod(np.arange(1, k + 1))
    if k == 1:
        return float(np.linalg.norm(J[:, 0]))
    return 0.5 * float(np.linalg.norm(np.cross(J[:, 0], J[:, 1])))


def _diameter(pts):
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((d * d).sum(-1)).max())


def _signed_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float((x * np.roll(y, -1) - np.roll(x, -1) * y).sum())


class Mesh:
    """Immutable polytopal mesh.

    ``cells`` are vertex-id sequences: counter-clockwise polygons in 2D,
    tetrahedra in 3D. ``tagger(centroid, normal)`` names each boundary face;
    ``face_tags`` (keyed by frozenset of vertex ids) overrides it.
    """

    def __init__(self, vertices, cells: Sequence[Sequence[int]],
                 tagger: Optional[Callable] = None,
                 face_tags: Optional[Mapping[frozenset, str]] = None,
                 meta: Optional[dict] = None, check_star: bool = True):
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
            raise MeshError("vertices must be an (n, 2) or (n, 3) array")
        self.dim = vertices.shape[1]
        self.vertices = vertices
        self.meta = dict(meta or {})
        self.elements: list[Element] = []
        cells = [tuple(int(v) for v in c) for c in cells]
        if not cells:
            raise MeshError("mesh has no cells")

        fixed = []
        for c in cells:
            pts = vertices[list(c)]
            if self.dim == 2:
                if len(c) < 3:
                    raise MeshError(f"polygon {c} has fewer than 3 vertices")
                area = _signed_area(pts)
                if area < 0:
                    c = c[::-1]
                    pts = pts[::-1]
                    area = -area
                if area <= 0:
                    raise MeshError(f"degenerate polygon {c}")
                if check_star and len(c) > 3:
                    fan = polygon_fan(pts)
                    e1 = fan[:, 1] - fan[:, 0]
                    e2 = fan[:, 2] - fan[:, 0]
                    if np.any(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] <= 0):
                        raise MeshError(f"polygon {c} is not star-shaped w.r.t. its centroid")
                centroid = polygon_centroid(pts)
            else:
                if len(c) != 4:
                    raise MeshError("3D meshes support tetrahedra only")
                area = _simplex_measure(pts)
                if area <= 0:
                    raise MeshError(f"degenerate tetrahedron {c}")
                centroid = pts.mean(axis=0)
            fixed.append(c)
            self.elements.append(Element(c, float(area), _diameter(pts), centroid,
                                         np.array([pts.min(0), pts.max(0)])))
        self.cells = fixed
        self._build_faces(tagger, face_tags or {})
        self._cache_arrays()

    # -- construction -----------------------------------------------------
    def _local_faces(self, c):
        if self.dim == 2:
            return [(c[i], c[(i + 1) % len(c)]) for i in range(len(c))]
        return [tuple(c[j] for j in range(4) if j != i) for i in range(4)]

    def _build_faces(self, tagger, face_tags):
        owners: dict = {}
        order = []
        for e, c in enumerate(self.cells):
            for f in self._local_faces(c):
                key = frozenset(f)
                if key not in owners:
                    owners[key] = [f, []]
                    order.append(key)
                owners[key][1].append(e)
        self.faces: list[Face] = []
        self.element_faces: list[list[int]] = [[] for _ in self.cells]
        for key in order:
            verts, elems = owners[key]
            if len(elems) > 2:
                raise MeshError(f"face {sorted(key)} shared by {len(elems)} elements")
            pts = self.vertices[list(verts)]
            plus = elems[0]
            minus = elems[1] if len(elems) == 2 else None
            if self.dim == 2:
                t = pts[1] - pts[0]
                n = np.array([t[1], -t[0]])
            else:
                n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
            n = n / np.linalg.norm(n)
            if np.dot(n, pts.mean(0) - self.elements[plus].centroid) < 0:
                n = -n
            tag = None
            if minus is None:
                if key in face_tags:
                    tag = face_tags[key]
                elif tagger is not None:
                    tag = tagger(pts.mean(0), n)
            fid = len(self.faces)
            self.faces.append(Face(tuple(verts), n, _simplex_measure(pts), plus, minus, tag))
            for e in elems:
                self.element_faces[e].append(fid)

    def _cache_arrays(self):
        self.elem_measure = np.array([e.measure for e in self.elements])
        self.elem_diameter = np.array([e.diameter for e in self.elements])
        self.elem_centroid = np.array([e.centroid for e in self.elements])
        self.elem_bbox = np.array([e.bbox for e in self.elements])
        self.face_normal = np.array([f.normal for f in self.faces])
        self.face_measure = np.array([f.measure for f in self.faces])
        self.face_plus = np.array([f.plus_element for f in self.faces], dtype=np.int64)
        self.face_minus = np.array([-1 if f.minus_element is None else f.minus_element
                                    for f in self.faces], dtype=np.int64)
        self.face_vertices = np.array([f.vertex_ids for f in self.faces], dtype=np.int64)
        self.boundary_faces = np.flatnonzero(self.face_minus < 0)
        self.interior_faces = np.flatnonzero(self.face_minus >= 0)

    # -- queries ------------------------------------------------------------
    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def h(self) -> float:
        return float(self.elem_diameter.max())

    @property
    def measure(self) -> float:
        return float(self.elem_measure.sum())

    def element_points(self, e: int) -> np.ndarray:
        return self.vertices[list(self.cells[e])]

    def boundary_tags(self) -> set:
        return {self.faces[f].tag for f in self.boundary_faces}

    def faces_with_tag(self, tag) -> np.ndarray:
        return np.array([f for f in self.boundary_faces if self.faces[f].tag == tag], dtype=np.int64)

    def info(self) -> dict:
        tags: dict = {}
        for f in self.boundary_faces:
            tags[self.faces[f].tag] = tags.get(self.faces[f].tag, 0) + 1
        return {
            "dim": self.dim,
            "vertices": len(self.vertices),
            "elements": self.n_elements,
            "faces": self.n_faces,
            "boundary": len(self.boundary_faces),
            "interior": len(self.interior_faces),
            "h": self.h,
            "measure": self.measure,
            "tags": tags,
        }


# -- generators -------------------------------------------------------------
def _box_tagger(lo, hi, dim):
    names = [("xmin", "xmax"), ("ymin", "ymax"), ("zmin", "zmax")][:dim]

    def tag(centroid, normal):
        axis = int(np.argmax(np.abs(normal)))
        return names[axis][0] if normal[axis] < 0 else names[axis][1]

    return tag


def _kuhn_tets(v):
    """Six tetrahedra of a cube sharing the main diagonal v[0] -> v[7]."""
    tets = []
    for perm in itertools.permutations(range(3)):
        path = [0]
        cur = 0
        for axis in perm:
            cur |= 1 << axis
            path.append(cur)
        tets.append(tuple(v[i] for i in path))
    return tets


def build_structured(dim: int, cells_per_axis: int, kind: str = "tri", domain_box=None) -> Mesh:
    """Uniform grid of the box split into triangles, quads or Kuhn tetrahedra."""
    if dim not in (2, 3):
        raise MeshError(f"dim must be 2 or 3, got {dim}")
    kind = kind.lower()
    valid = {2: ("tri", "quad"), 3: ("tet",)}
    if kind not in valid[dim]:
        raise MeshError(f"element kind {kind!r} not available in {dim}D")
    n = int(cells_per_axis)
    if n < 1:
        raise MeshError("cells_per_axis must be >= 1")
    if domain_box is None:
        domain_box = [(0.0, 1.0)] * dim
    lo = np.array([b[0] for b in domain_box], dtype=float)
    hi = np.array([b[1] for b in domain_box], dtype=float)
    axes = [np.linspace(lo[d], hi[d], n + 1) for d in range(dim)]

    if dim == 2:
        X, Y = np.meshgrid(axes[0], axes[1], indexing="xy")
        vertices = np.column_stack([X.ravel(), Y.ravel()])
        vid = lambda i, j: j * (n + 1) + i  # noqa: E731
        cells = []
        for j in range(n):
            for i in range(n):
                a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
                if kind == "quad":
                    cells.append((a, b, c, d))
                else:
                    cells.append((a, b, c))
                    cells.append((a, c, d))
    else:
        Z, Y, X = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
        vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
        vid = lambda i, j, k: (k * (n + 1) + j) * (n + 1) + i  # noqa: E731
        cells = []
        for k in range(n):
            for j in range(n):
                for i in range(n):
                    corners = [vid(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1))
                               for b in range(8)]
                    cells.extend(_kuhn_tets(corners))
    meta = {"structured": {"kind": kind, "n": n, "box": (lo.tolist(), hi.tolist())}}
    return Mesh(vertices, cells, tagger=_box_tagger(lo, hi, dim), meta=meta)


def agglomerate(mesh: Mesh, group_edge: int) -> Mesh:
    """Merge group_edge x group_edge blocks of a structured quad mesh into polygons.

    The merged polygons keep every original boundary vertex, so faces shared
    between two agglomerates stay split at the original grid points.
    """
    info = mesh.meta.get("structured")
    if mesh.dim != 2 or info is None or info["kind"] != "quad":
        raise MeshError("agglomerate expects a structured 2D quad mesh")
    n, g = info["n"], int(group_edge)
    if g < 1 or n % g:
        raise MeshError(f"group_edge {g} does not divide cells_per_axis {n}")
    if g == 1:
        return mesh
    vid = lambda i, j: j * (n + 1) + i  # noqa: E731
    cells = []
    for J in range(n // g):
        for I in range(n // g):
            i0, j0, i1, j1 = I * g, J * g, (I + 1) * g, (J + 1) * g
            ring = [vid(i, j0) for i in range(i0, i1)]
            ring += [vid(i1, j) for j in range(j0, j1)]
            ring += [vid(i, j1) for i in range(i1, i0, -1)]
            ring += [vid(i0, j) for j in range(j1, j0, -1)]
            cells.append(tuple(ring))
    lo, hi = (np.array(b) for b in info["box"])
    meta = {"agglomerated": {"from": info, "group_edge": g}}
    return Mesh(mesh.vertices, cells, tagger=_box_tagger(lo, hi, 2), meta=meta)


def build_annulus(r_in: float, r_out: float, n_radial: int, n_angular: int) -> Mesh:
    """Polar quad mesh of r_in <= |x| <= r_out with boundary tags inner/outer.

    Ring vertices sit at radius r*sqrt(dtheta/sin(dtheta)) so each polygonal
    ring encloses exactly the area of the circle it approximates.
    """
    if not (0 < r_in < r_out):
        raise MeshError(f"need 0 < r_in < r_out, got r_in={r_in}, r_out={r_out}")
    if n_radial < 1 or n_angular < 3:
        raise MeshError("need n_radial >= 1 and n_angular >= 3")
    dth = 2 * np.pi / n_angular
    scale = np.sqrt(dth / np.sin(dth))
    radii = np.linspace(r_in, r_out, n_radial + 1) * scale
    th = np.arange(n_angular) * dth
    vertices = np.array([(r * np.cos(t), r * np.sin(t)) for r in radii for t in th])
    vid = lambda i, k: i * n_angular + (k % n_angular)  # noqa: E731
    cells = [(vid(i, k), vid(i + 1, k), vid(i + 1, k + 1), vid(i, k + 1))
             for i in range(n_radial) for k in range(n_angular)]
    r_mid = 0.5 * (radii[0] + radii[-1])

    def tagger(centroid, normal):
        return "inner" if np.linalg.norm(centroid) < r_mid else "outer"

    meta = {"annulus": {"r_in": r_in, "r_out": r_out, "n_radial": n_radial, "n_angular": n_angular}}
    return Mesh(vertices, cells, tagger=tagger, meta=meta)


# -- boundary classification ------------------------------------------------
_KINDS = {"dirichlet": "dirichlet", "d": "dirichlet", "neumann": "neumann", "n": "neumann"}


def classify_faces(mesh: Mesh, field_spec: Mapping[str, str]) -> FacePartition:
    """Split faces into interior / Dirichlet / Neumann sets.

    ``field_spec`` maps boundary tags to ``"dirichlet"`` or ``"neumann"``; the
    key ``"all"`` supplies the kind for any face whose tag is not listed.
    """
    spec = {}
    for tag, kind in field_spec.items():
        k = _KINDS.get(str(kind).strip().lower())
        if k is None:
            raise MeshError(f"unknown boundary kind {kind!r} for tag {tag!r}")
        spec[str(tag)] = k
    default = spec.get("all")
    dirichlet, neumann = [], []
    for f in mesh.boundary_faces:
        tag = mesh.faces[f].tag
        kind = spec.get(str(tag)) if tag is not None else None
        if kind is None:
            kind = default
        if kind is None:
            raise MeshError(f"boundary face {f} with tag {tag!r} has no boundary condition")
        (dirichlet if kind == "dirichlet" else neumann).append(f)
    return FacePartition(mesh.interior_faces.copy(),
                         np.array(dirichlet, dtype=np.int64),
                         np.array(neumann, dtype=np.int64))
