"""Gmsh MSH (2.2 / 4.1 ASCII) reading and writing, VTK XML output."""
from __future__ import annotations

import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .core import BoundaryMarker, MeshError, TriMesh

# physical tags written by write_msh22 and assumed when no map is supplied
DEFAULT_MARKER_MAP = {
    1: BoundaryMarker.INFLOW,
    2: BoundaryMarker.OUTFLOW,
    3: BoundaryMarker.WALL,
    4: BoundaryMarker.OBSTACLE,
}
SURFACE_TAG = 5

_LINE, _TRIANGLE = 1, 2


class MshParseError(MeshError):
    pass


def _sections(text):
    """Map section name to list of body lines."""
    out = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("$") and not line.startswith("$End"):
            name = line[1:]
            end = "$End" + name
            j = i + 1
            while j < len(lines) and lines[j].strip() != end:
                j += 1
            if j == len(lines):
                raise MshParseError(f"section ${name} opened at line {i + 1} is never closed")
            out[name] = [(k + 1, lines[k]) for k in range(i + 1, j)]
            i = j + 1
        else:
            i += 1
    return out


def _physical_names(sections):
    names = {}
    for _, line in sections.get("PhysicalNames", [])[1:]:
        parts = line.split(maxsplit=2)
        if len(parts) == 3:
            names[int(parts[1])] = parts[2].strip().strip('"')
    return names


def _resolve_map(marker_map, names):
    """Physical tag -> BoundaryMarker, accepting integer tags or group names as keys."""
    marker_map = DEFAULT_MARKER_MAP if marker_map is None else marker_map
    by_name = {v.lower(): k for k, v in names.items()}
    out = {}
    for key, value in marker_map.items():
        marker = BoundaryMarker.parse(value) if not isinstance(value, BoundaryMarker) else value
        if isinstance(key, (int, np.integer)) or str(key).strip().lstrip("-").isdigit():
            out[int(key)] = marker
        elif str(key).lower() in by_name:
            out[by_name[str(key).lower()]] = marker
        else:
            raise MshParseError(f"marker map refers to unknown physical group {key!r}")
    return out


def _parse_v2(sections):
    nodes = {}
    body = sections["Nodes"]
    count = int(body[0][1])
    for lineno, line in body[1:count + 1]:
        parts = line.split()
        if len(parts) < 4:
            raise MshParseError(f"line {lineno}: malformed node record")
        nodes[int(parts[0])] = (float(parts[1]), float(parts[2]))
    lines, tris = [], []
    body = sections["Elements"]
    count = int(body[0][1])
    for lineno, line in body[1:count + 1]:
        parts = [int(x) for x in line.split()]
        etype, ntags = parts[1], parts[2]
        tags = parts[3:3 + ntags]
        conn = parts[3 + ntags:]
        phys = tags[0] if tags else 0
        if etype == _LINE:
            if len(conn) != 2:
                raise MshParseError(f"line {lineno}: line element needs 2 nodes")
            lines.append((phys, conn))
        elif etype == _TRIANGLE:
            if len(conn) != 3:
                raise MshParseError(f"line {lineno}: triangle needs 3 nodes")
            tris.append(conn)
    return nodes, lines, tris


def _parse_v4(sections):
    entity_phys = {}
    if "Entities" in sections:
        body = sections["Entities"]
        npts, ncurves, nsurf, _ = (int(x) for x in body[0][1].split())
        k = 1
        for _ in range(npts):
            parts = body[k][1].split()
            k += 1
            nphys = int(parts[4])
            entity_phys[(0, int(parts[0]))] = [int(x) for x in parts[5:5 + nphys]]
        for dim, n in ((1, ncurves), (2, nsurf)):
            for _ in range(n):
                parts = body[k][1].split()
                k += 1
                nphys = int(parts[7])
                entity_phys[(dim, int(parts[0]))] = [int(x) for x in parts[8:8 + nphys]]
    nodes = {}
    body = sections["Nodes"]
    nblocks = int(body[0][1].split()[0])
    k = 1
    for _ in range(nblocks):
        dim, tag, parametric, n = (int(x) for x in body[k][1].split())
        k += 1
        ids = [int(body[k + i][1]) for i in range(n)]
        k += n
        for i in range(n):
            lineno, line = body[k + i]
            xyz = line.split()
            if len(xyz) < 3:
                raise MshParseError(f"line {lineno}: malformed node coordinates")
            nodes[ids[i]] = (float(xyz[0]), float(xyz[1]))
        k += n
    lines, tris = [], []
    body = sections["Elements"]
    nblocks = int(body[0][1].split()[0])
    k = 1
    for _ in range(nblocks):
        dim, tag, etype, n = (int(x) for x in body[k][1].split())
        k += 1
        phys = entity_phys.get((dim, tag), [0])
        phys = phys[0] if phys else 0
        for i in range(n):
            conn = [int(x) for x in body[k + i][1].split()[1:]]
            if etype == _LINE:
                lines.append((phys, conn[:2]))
            elif etype == _TRIANGLE:
                tris.append(conn[:3])
        k += n
    return nodes, lines, tris


def load_gmsh(path, marker_map=None):
    """Read a 2D triangle mesh from an ASCII Gmsh MSH 2.2 or 4.1 file.

    ``marker_map`` maps physical tags (or physical group names) to
    :class:`BoundaryMarker` values; line elements whose physical group is
    not mapped are ignored. Clockwise triangles are reoriented.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    sections = _sections(text)
    for name in ("MeshFormat", "Nodes", "Elements"):
        if name not in sections:
            raise MshParseError(f"{path}: missing ${name} section")
    fmt = sections["MeshFormat"][0][1].split()
    version, filetype = fmt[0], int(fmt[1])
    if filetype != 0:
        raise MshParseError(f"{path}: binary MSH files are not supported")
    try:
        if version.startswith("2"):
            nodes, lines, tris = _parse_v2(sections)
        elif version.startswith("4"):
            nodes, lines, tris = _parse_v4(sections)
        else:
            raise MshParseError(f"{path}: unsupported MSH version {version}")
    except (ValueError, IndexError, KeyError) as exc:
        if isinstance(exc, MshParseError):
            raise
        raise MshParseError(f"{path}: malformed mesh data ({exc})") from exc
    if not tris:
        raise MshParseError(f"{path}: no triangles found")
    tag_map = _resolve_map(marker_map, _physical_names(sections))

    used = sorted({n for t in tris for n in t})
    index = {n: i for i, n in enumerate(used)}
    try:
        vertices = np.array([nodes[n] for n in used])
        triangles = np.array([[index[n] for n in t] for t in tris])
    except KeyError as exc:
        raise MshParseError(f"{path}: element refers to undefined node {exc}") from None
    edges, marks = [], []
    for phys, (a, b) in lines:
        if phys in tag_map:
            if a not in index or b not in index:
                raise MshParseError(f"{path}: boundary line uses a node outside the triangulation")
            edges.append((index[a], index[b]))
            marks.append(int(tag_map[phys]))
    return TriMesh.build(vertices, triangles, np.array(edges, dtype=np.int64).reshape(-1, 2), marks)


def write_msh22(mesh, path):
    """Write ``mesh`` as ASCII MSH 2.2 with the default physical tags."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$PhysicalNames", str(len(DEFAULT_MARKER_MAP) + 1)]
    for tag, marker in DEFAULT_MARKER_MAP.items():
        out.append(f'1 {tag} "{marker.name.lower()}"')
    out.append(f'2 {SURFACE_TAG} "fluid"')
    out += ["$EndPhysicalNames", "$Nodes", str(mesh.n_vertices)]
    for i, (x, y) in enumerate(mesh.vertices.tolist(), start=1):
        out.append(f"{i} {x!r} {y!r} 0")
    out += ["$EndNodes", "$Elements", str(len(mesh.boundary_edges) + mesh.n_triangles)]
    k = 1
    for (a, b), m in zip(mesh.boundary_edges.tolist(), mesh.boundary_markers.tolist()):
        out.append(f"{k} {_LINE} 2 {m} {m} {a + 1} {b + 1}")
        k += 1
    for a, b, c in mesh.triangles.tolist():
        out.append(f"{k} {_TRIANGLE} 2 {SURFACE_TAG} 1 {a + 1} {b + 1} {c + 1}")
        k += 1
    out.append("$EndElements")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


# -- VTK ----------------------------------------------------------------------

_VTK_TRIANGLE = 5


@dataclass
class VtuData:
    vertices: np.ndarray
    triangles: np.ndarray
    point_data: dict = field(default_factory=dict)
    cell_data: dict = field(default_factory=dict)


def _fmt(values):
    return " ".join(repr(v) for v in values.ravel().tolist())


def _data_array(parent, name, values, dtype="Float64"):
    values = np.asarray(values)
    attrs = {"type": dtype}
    if name:
        attrs["Name"] = name
    if values.ndim == 2:
        attrs["NumberOfComponents"] = str(values.shape[1])
    attrs["format"] = "ascii"
    el = ET.SubElement(parent, "DataArray", attrs)
    el.text = _fmt(values.astype(float) if dtype == "Float64" else values)
    return el


def _pad3(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 2 and a.shape[1] == 2:
        a = np.column_stack([a, np.zeros(len(a))])
    return a


def write_vtu(mesh, path, point_data=None, cell_data=None):
    """Write an ASCII VTK XML unstructured grid.

    Two-component vector fields are padded to three components. Output is
    byte-deterministic for identical input.
    """
    point_data = point_data or {}
    cell_data = cell_data or {}
    nv, nt = len(mesh.vertices), len(mesh.triangles)
    for name, arr in point_data.items():
        if len(arr) != nv:
            raise ValueError(f"point field {name!r} has {len(arr)} entries, expected {nv}")
    for name, arr in cell_data.items():
        if len(arr) != nt:
            raise ValueError(f"cell field {name!r} has {len(arr)} entries, expected {nt}")
    root = ET.Element("VTKFile", {"type": "UnstructuredGrid", "version": "0.1", "byte_order": "LittleEndian"})
    grid = ET.SubElement(root, "UnstructuredGrid")
    piece = ET.SubElement(grid, "Piece", {"NumberOfPoints": str(nv), "NumberOfCells": str(nt)})
    pd = ET.SubElement(piece, "PointData")
    for name in sorted(point_data):
        _data_array(pd, name, _pad3(point_data[name]))
    cd = ET.SubElement(piece, "CellData")
    for name in sorted(cell_data):
        _data_array(cd, name, _pad3(cell_data[name]))
    pts = ET.SubElement(piece, "Points")
    _data_array(pts, None, _pad3(mesh.vertices))
    cells = ET.SubElement(piece, "Cells")
    _data_array(cells, "connectivity", np.asarray(mesh.triangles, dtype=np.int64), "Int64")
    _data_array(cells, "offsets", 3 * np.arange(1, nt + 1, dtype=np.int64), "Int64")
    _data_array(cells, "types", np.full(nt, _VTK_TRIANGLE, dtype=np.int64), "UInt8")
    ET.indent(root)
    body = ET.tostring(root, encoding="unicode")
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write('<?xml version="1.0"?>\n' + body + "\n")
    os.replace(tmp, path)


def _read_array(el):
    values = np.array(el.text.split(), dtype=float) if el.text else np.zeros(0)
    ncomp = int(el.get("NumberOfComponents", "1"))
    return values.reshape(-1, ncomp) if ncomp > 1 else values


def read_vtu(path):
    """Read back a file produced by :func:`write_vtu`."""
    root = ET.parse(path).getroot()
    piece = root.find("UnstructuredGrid/Piece")
    points = _read_array(piece.find("Points/DataArray"))
    conn = piece.find("Cells/DataArray[@Name='connectivity']")
    tris = np.array(conn.text.split(), dtype=np.int64).reshape(-1, 3)
    pdata = {el.get("Name"): _read_array(el) for el in piece.findall("PointData/DataArray")}
    cdata = {el.get("Name"): _read_array(el) for el in piece.findall("CellData/DataArray")}
    return VtuData(points[:, :2].copy(), tris, pdata, cdata)
