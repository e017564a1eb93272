"""Polyhedral mesh file I/O.

Two formats:

* JSON schema: an object with keys ``vertices`` (list of [x, y, z]),
  ``faces`` (list of vertex-index loops), ``cells`` (list of face-index
  lists), and optional ``boundary_tags`` (map from tag-set name to a list of
  one integer per face: 0 interior/untagged, 1 essential, 2 natural).
* VTU (ascii XML UnstructuredGrid) with polyhedron cells (type 42); faces are
  deduplicated on read.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from .errors import ParseError
from .mesh import PolyMesh


def save_json(mesh: PolyMesh, path) -> None:
    data = {
        "vertices": mesh.vertices.tolist(),
        "faces": [f.tolist() for f in mesh.faces],
        "cells": [c.tolist() for c in mesh.cells],
        "boundary_tags": {k: v.tolist() for k, v in mesh.boundary_tags.items()},
    }
    Path(path).write_text(json.dumps(data))


def load_json(path) -> PolyMesh:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read mesh file {path}: {exc}") from exc
    for key in ("vertices", "faces", "cells"):
        if key not in data:
            raise ParseError(f"mesh file {path} lacks required key {key!r}")
    mesh = PolyMesh(np.asarray(data["vertices"], dtype=float),
                    [np.asarray(f, dtype=np.int64) for f in data["faces"]],
                    [np.asarray(c, dtype=np.int64) for c in data["cells"]])
    for name, tags in data.get("boundary_tags", {}).items():
        tags = np.asarray(tags, dtype=np.int64)
        if len(tags) != mesh.num_faces:
            raise ParseError(f"tag set {name!r} length {len(tags)} != "
                             f"face count {mesh.num_faces}")
        mesh.boundary_tags[name] = tags
    return mesh


def _canonical(loop) -> tuple:
    """Rotation/reflection-invariant key of a vertex loop."""
    loop = list(int(v) for v in loop)
    k = loop.index(min(loop))
    fwd = tuple(loop[k:] + loop[:k])
    rev_loop = loop[::-1]
    k = rev_loop.index(min(rev_loop))
    rev = tuple(rev_loop[k:] + rev_loop[:k])
    return min(fwd, rev)


def save_vtu(mesh: PolyMesh, path, point_data=None, cell_data=None) -> None:
    """Ascii VTU with polyhedron cells and optional data arrays."""
    point_data = point_data or {}
    cell_data = cell_data or {}

    def arr_text(a, fmt="{:.16g}"):
        return " ".join(fmt.format(x) for x in np.asarray(a).ravel())

    root = ET.Element("VTKFile", type="UnstructuredGrid", version="1.0",
                      byte_order="LittleEndian")
    grid = ET.SubElement(root, "UnstructuredGrid")
    piece = ET.SubElement(grid, "Piece",
                          NumberOfPoints=str(mesh.num_vertices),
                          NumberOfCells=str(mesh.num_cells))
    pts = ET.SubElement(piece, "Points")
    da = ET.SubElement(pts, "DataArray", type="Float64",
                       NumberOfComponents="3", format="ascii")
    da.text = arr_text(mesh.vertices)

    conn, offs, faces_stream, foffs = [], [], [], []
    off = 0
    foff = 0
    for ci in range(mesh.num_cells):
        cverts = mesh.cell_vertices(ci)
        conn.extend(int(v) for v in cverts)
        off += len(cverts)
        offs.append(off)
        cfaces = mesh.cells[ci]
        stream = [len(cfaces)]
        for fi in cfaces:
            loop = mesh.faces[fi]
            stream.append(len(loop))
            stream.extend(int(v) for v in loop)
        faces_stream.extend(stream)
        foff += len(stream)
        foffs.append(foff)

    cells = ET.SubElement(piece, "Cells")
    for name, data, typ in (
            ("connectivity", conn, "Int64"), ("offsets", offs, "Int64"),
            ("types", [42] * mesh.num_cells, "UInt8"),
            ("faces", faces_stream, "Int64"), ("faceoffsets", foffs, "Int64")):
        d = ET.SubElement(cells, "DataArray", type=typ, Name=name,
                          format="ascii")
        d.text = " ".join(str(x) for x in data)

    if point_data:
        pd = ET.SubElement(piece, "PointData")
        for name, a in point_data.items():
            a = np.asarray(a)
            ncomp = 1 if a.ndim == 1 else a.shape[1]
            d = ET.SubElement(pd, "DataArray", type="Float64", Name=name,
                              NumberOfComponents=str(ncomp), format="ascii")
            d.text = arr_text(a)
    if cell_data:
        cd = ET.SubElement(piece, "CellData")
        for name, a in cell_data.items():
            a = np.asarray(a)
            ncomp = 1 if a.ndim == 1 else a.shape[1]
            d = ET.SubElement(cd, "DataArray", type="Float64", Name=name,
                              NumberOfComponents=str(ncomp), format="ascii")
            d.text = arr_text(a)

    ET.indent(root)
    ET.ElementTree(root).write(path, xml_declaration=True, encoding="ascii")


def load_vtu(path) -> PolyMesh:
    """Read an ascii polyhedron VTU; faces are deduplicated across cells."""
    try:
        tree = ET.parse(path)
    except (OSError, ET.ParseError) as exc:
        raise ParseError(f"cannot parse {path}: {exc}") from exc
    piece = tree.getroot().find(".//Piece")
    if piece is None:
        raise ParseError(f"{path}: no UnstructuredGrid piece")

    def get_array(parent, name, dtype):
        for da in parent.iter("DataArray"):
            if da.get("Name") == name:
                if da.get("format", "ascii") != "ascii":
                    raise ParseError(f"{path}: only ascii arrays supported")
                return np.fromstring(da.text or "", sep=" ", dtype=dtype)
        return None

    pts_el = piece.find("Points/DataArray")
    if pts_el is None:
        raise ParseError(f"{path}: missing points")
    vertices = np.fromstring(pts_el.text or "", sep=" ").reshape(-1, 3)
    cells_el = piece.find("Cells")
    types = get_array(cells_el, "types", np.int64)
    if types is None or not np.all(types == 42):
        raise ParseError(f"{path}: expected polyhedron (type 42) cells only")
    stream = get_array(cells_el, "faces", np.int64)
    foffs = get_array(cells_el, "faceoffsets", np.int64)
    if stream is None or foffs is None:
        raise ParseError(f"{path}: polyhedron cells need faces/faceoffsets")

    faces, cells = [], []
    face_index = {}
    start = 0
    for end in foffs:
        chunk = stream[start:end]
        start = end
        k = 0
        nfaces = int(chunk[k]); k += 1
        cfaces = []
        for _ in range(nfaces):
            nv = int(chunk[k]); k += 1
            loop = chunk[k:k + nv]; k += nv
            key = _canonical(loop)
            idx = face_index.get(key)
            if idx is None:
                idx = len(faces)
                face_index[key] = idx
                faces.append(np.asarray(loop, dtype=np.int64))
            cfaces.append(idx)
        cells.append(np.asarray(cfaces, dtype=np.int64))
    return PolyMesh(vertices, faces, cells)


def load_mesh(path) -> PolyMesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".json":
        return load_json(path)
    if suffix == ".vtu":
        return load_vtu(path)
    raise ParseError(f"unsupported mesh format {suffix!r} (use .json or .vtu)")
