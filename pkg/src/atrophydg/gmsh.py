"""Reader for Gmsh MSH ASCII files (formats 2.2 and 4.1).

Only simplicial meshes are accepted: triangles with tagged boundary lines in
2D, tetrahedra with tagged boundary triangles in 3D. Boundary tags are the
physical group names (or their numbers when unnamed).
"""
from __future__ import annotations

from pathlib import Path

from .mesh import Mesh, MeshError

# element type -> (topological dim, node count)
_TYPES = {15: (0, 1), 1: (1, 2), 2: (2, 3), 4: (3, 4)}


class MeshParseError(MeshError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class _Lines:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self):
        while self.pos < len(self.lines):
            raw = self.lines[self.pos]
            self.pos += 1
            if raw.strip():
                return raw.strip()
        raise MeshParseError("unexpected end of file", self.pos)

    @property
    def lineno(self):
        return self.pos

    def ints(self):
        s = self.next()
        try:
            return [int(t) for t in s.split()]
        except ValueError:
            raise MeshParseError(f"expected integers, got {s!r}", self.lineno) from None

    def floats(self):
        s = self.next()
        try:
            return [float(t) for t in s.split()]
        except ValueError:
            raise MeshParseError(f"expected numbers, got {s!r}", self.lineno) from None

    def expect(self, token):
        s = self.next()
        if s != token:
            raise MeshParseError(f"expected {token}, got {s!r}", self.lineno)


def _element_type(etype, lineno):
    if etype not in _TYPES:
        raise MeshParseError(f"unsupported element type {etype}", lineno)
    return _TYPES[etype]


def _read_physical_names(L):
    names = {}
    count = L.ints()[0]
    for _ in range(count):
        s = L.next()
        parts = s.split(maxsplit=2)
        if len(parts) < 3:
            raise MeshParseError(f"malformed physical name {s!r}", L.lineno)
        names[(int(parts[0]), int(parts[1]))] = parts[2].strip().strip('"')
    L.expect("$EndPhysicalNames")
    return names


def _parse_v2(L, names):
    nodes, elements = {}, []
    while True:
        try:
            head = L.next()
        except MeshParseError:
            break
        if head == "$PhysicalNames":
            names.update(_read_physical_names(L))
        elif head == "$Nodes":
            count = L.ints()[0]
            for _ in range(count):
                vals = L.floats()
                if len(vals) != 4:
                    raise MeshParseError("node line needs id x y z", L.lineno)
                nodes[int(vals[0])] = vals[1:]
            L.expect("$EndNodes")
        elif head == "$Elements":
            count = L.ints()[0]
            for _ in range(count):
                vals = L.ints()
                if len(vals) < 3:
                    raise MeshParseError("malformed element line", L.lineno)
                etype, ntags = vals[1], vals[2]
                dim, nn = _element_type(etype, L.lineno)
                if len(vals) != 3 + ntags + nn:
                    raise MeshParseError("element line has wrong length", L.lineno)
                phys = vals[3] if ntags > 0 else None
                elements.append((dim, phys, vals[3 + ntags:], L.lineno))
            L.expect("$EndElements")
        elif head.startswith("$"):
            end = "$End" + head[1:]
            while L.next() != end:
                pass
        else:
            raise MeshParseError(f"unexpected content {head!r}", L.lineno)
    return nodes, elements


def _parse_v4(L, names):
    nodes, elements = {}, []
    entity_phys = {}
    while True:
        try:
            head = L.next()
        except MeshParseError:
            break
        if head == "$PhysicalNames":
            names.update(_read_physical_names(L))
        elif head == "$Entities":
            counts = L.ints()
            if len(counts) != 4:
                raise MeshParseError("entity header needs four counts", L.lineno)
            for dim, cnt in enumerate(counts):
                for _ in range(cnt):
                    vals = L.floats()
                    tag = int(vals[0])
                    k = 4 if dim == 0 else 7
                    if len(vals) <= k:
                        raise MeshParseError("malformed entity line", L.lineno)
                    nphys = int(vals[k])
                    phys = [int(v) for v in vals[k + 1:k + 1 + nphys]]
                    entity_phys[(dim, tag)] = phys[0] if phys else None
            L.expect("$EndEntities")
        elif head == "$Nodes":
            nblocks = L.ints()[0]
            for _ in range(nblocks):
                hdr = L.ints()
                if len(hdr) != 4:
                    raise MeshParseError("malformed node block header", L.lineno)
                nn = hdr[3]
                tags = [L.ints()[0] for _ in range(nn)]
                for t in tags:
                    xyz = L.floats()
                    if len(xyz) < 3:
                        raise MeshParseError("node needs x y z", L.lineno)
                    nodes[t] = xyz[:3]
            L.expect("$EndNodes")
        elif head == "$Elements":
            nblocks = L.ints()[0]
            for _ in range(nblocks):
                hdr = L.ints()
                if len(hdr) != 4:
                    raise MeshParseError("malformed element block header", L.lineno)
                edim, etag, etype, cnt = hdr
                dim, nn = _element_type(etype, L.lineno)
                phys = entity_phys.get((edim, etag))
                for _ in range(cnt):
                    vals = L.ints()
                    if len(vals) != 1 + nn:
                        raise MeshParseError("element line has wrong length", L.lineno)
                    elements.append((dim, phys, vals[1:], L.lineno))
            L.expect("$EndElements")
        elif head.startswith("$"):
            end = "$End" + head[1:]
            while L.next() != end:
                pass
        else:
            raise MeshParseError(f"unexpected content {head!r}", L.lineno)
    return nodes, elements


def read_gmsh(text: str) -> Mesh:
    L = _Lines(text)
    L.expect("$MeshFormat")
    fmt = L.next().split()
    if len(fmt) < 3:
        raise MeshParseError("malformed format line", L.lineno)
    version = fmt[0]
    if fmt[1] != "0":
        raise MeshParseError("binary MSH files are not supported", L.lineno)
    L.expect("$EndMeshFormat")
    names: dict = {}
    if version.startswith("2."):
        nodes, elements = _parse_v2(L, names)
    elif version.startswith("4."):
        nodes, elements = _parse_v4(L, names)
    else:
        raise MeshParseError(f"unsupported MSH version {version}", 2)
    if not nodes or not elements:
        raise MeshParseError("file holds no nodes or no elements", L.lineno)

    mdim = max(e[0] for e in elements)
    if mdim < 2:
        raise MeshParseError("no 2D or 3D cells found", L.lineno)
    ids = sorted(nodes)
    index = {t: i for i, t in enumerate(ids)}
    coords = [nodes[t] for t in ids]
    if mdim == 2:
        coords = [c[:2] for c in coords]

    cells, facets = [], {}
    for dim, phys, conn, lineno in elements:
        try:
            local = [index[t] for t in conn]
        except KeyError as err:
            raise MeshParseError(f"element references unknown node {err.args[0]}", lineno) from None
        if dim == mdim:
            cells.append(local)
        elif dim == mdim - 1:
            if phys is None:
                continue
            tag = names.get((dim, phys), str(phys))
            facets[frozenset(local)] = (tag, lineno)
        elif dim == mdim - 2 or dim == 0:
            continue
    face_tags = {k: v[0] for k, v in facets.items()}
    mesh = Mesh(coords, cells, face_tags=face_tags, meta={"gmsh": {"version": version}})
    boundary = {frozenset(mesh.faces[f].vertex_ids) for f in mesh.boundary_faces}
    for key, (tag, lineno) in facets.items():
        if key not in boundary:
            raise MeshParseError(f"tagged facet {sorted(key)} ({tag}) is not a boundary face", lineno)
    return mesh


def import_gmsh(path) -> Mesh:
    return read_gmsh(Path(path).read_text())


def write_gmsh_v2(mesh: Mesh, path) -> None:
    """Write a simplicial mesh and its boundary tags as MSH 2.2 (used for fixtures)."""
    tags = sorted({str(mesh.faces[f].tag) for f in mesh.boundary_faces})
    number = {t: i + 1 for i, t in enumerate(tags)}
    fdim = mesh.dim - 1
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$PhysicalNames", str(len(tags))]
    lines += [f'{fdim} {number[t]} "{t}"' for t in tags]
    lines += ["$EndPhysicalNames", "$Nodes", str(len(mesh.vertices))]
    for i, v in enumerate(mesh.vertices):
        xyz = [float(x) for x in v] + [0.0] * (3 - len(v))
        lines.append(f"{i + 1} {xyz[0]!r} {xyz[1]!r} {xyz[2]!r}")
    lines.append("$EndNodes")
    rows = []
    ftype, ctype = (1, 2) if mesh.dim == 2 else (2, 4)
    for f in mesh.boundary_faces:
        face = mesh.faces[f]
        rows.append((ftype, number[str(face.tag)], face.vertex_ids))
    for c in mesh.cells:
        if len(c) != mesh.dim + 1:
            raise MeshError("only simplicial meshes can be written")
        rows.append((ctype, 0, c))
    lines += ["$Elements", str(len(rows))]
    for k, (t, phys, conn) in enumerate(rows):
        lines.append(" ".join(str(x) for x in [k + 1, t, 2, phys, phys] + [int(v) + 1 for v in conn]))
    lines.append("$EndElements")
    Path(path).write_text("\n".join(lines) + "\n")
