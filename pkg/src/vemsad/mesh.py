"""Polyhedral mesh data model, geometric cache, and regularity diagnostics.

A :class:`PolyMesh` is immutable after construction: faces are stored once
with a fixed normal, and each cell keeps a +/-1 sign telling whether that
normal points outward.  Construction validates closure, Euler characteristic,
face planarity, and positive volumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import poly
from .errors import (EmptyDirichletError, GeometryError, TopologyError)

DIRICHLET = 1
NEUMANN = 2

PLANARITY_TOL = 1e-10
CLOSURE_TOL = 1e-12


def _polygon_frame(verts: np.ndarray):
    """Newell normal, area centroid, area, diameter, and orthonormal tangents."""
    n = np.zeros(3)
    for i in range(len(verts)):
        a, b = verts[i], verts[(i + 1) % len(verts)]
        n += np.cross(a, b)
    nrm = np.linalg.norm(n)
    if nrm == 0.0:
        raise GeometryError("degenerate face (zero Newell normal)")
    n /= nrm
    pm = verts.mean(axis=0)
    area = 0.0
    centroid = np.zeros(3)
    for i in range(len(verts)):
        a, b = verts[i], verts[(i + 1) % len(verts)]
        tri = 0.5 * np.dot(np.cross(a - pm, b - pm), n)
        area += tri
        centroid += tri * (a + b + pm) / 3.0
    if area <= 0.0:
        # loop orientation opposite to Newell normal cannot happen (Newell
        # follows the loop); a nonpositive area means a broken polygon
        raise GeometryError("nonpositive face area")
    centroid /= area
    diam = max(np.linalg.norm(verts[i] - verts[j])
               for i in range(len(verts)) for j in range(i + 1, len(verts)))
    t1 = verts[0] - centroid
    t1 -= np.dot(t1, n) * n
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return n, centroid, area, diam, t1, t2


@dataclass
class GeometricCache:
    """Per-entity geometry: diameters, barycenters, measures, face frames."""

    cell_centroid: np.ndarray
    cell_volume: np.ndarray
    cell_h: np.ndarray
    face_normal: np.ndarray
    face_centroid: np.ndarray
    face_area: np.ndarray
    face_h: np.ndarray
    face_t1: np.ndarray
    face_t2: np.ndarray
    edge_length: np.ndarray


@dataclass
class PolyMesh:
    """Polyhedral mesh: vertices, edges, faces (vertex loops), cells (face lists).

    ``boundary_tags`` maps a tag-set name to an int array over faces with
    values 0 (interior), DIRICHLET, or NEUMANN; different fields of a coupled
    problem may use different tag sets.
    """

    vertices: np.ndarray
    faces: list            # list of int arrays (vertex loops)
    cells: list            # list of int arrays (face indices)
    edges: np.ndarray = None
    face_edges: list = None      # per face, edge index aligned with loop edge i
    cell_face_sign: list = None  # +1 if stored face normal is outward
    face_cells: np.ndarray = None  # (nf, 2), -1 when absent; owner first
    boundary_tags: dict = field(default_factory=dict)
    geom: GeometricCache = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.faces = [np.asarray(f, dtype=np.int64) for f in self.faces]
        self.cells = [np.asarray(c, dtype=np.int64) for c in self.cells]
        self._build_edges()
        self._build_geometry()
        self._orient_cells()
        self._validate()
        self._fquad = {}
        self._cquad = {}
        self._cell_vertices = None
        self._cell_edges = None

    # -- construction ------------------------------------------------------

    def _build_edges(self):
        edge_ids = {}
        face_edges = []
        for loop in self.faces:
            ids = []
            for i in range(len(loop)):
                key = tuple(sorted((int(loop[i]), int(loop[(i + 1) % len(loop)]))))
                if key not in edge_ids:
                    edge_ids[key] = len(edge_ids)
                ids.append(edge_ids[key])
            face_edges.append(np.array(ids, dtype=np.int64))
        self.face_edges = face_edges
        edges = np.empty((len(edge_ids), 2), dtype=np.int64)
        for (a, b), i in edge_ids.items():
            edges[i] = (a, b)
        self.edges = edges

    def _build_geometry(self):
        nf = len(self.faces)
        normal = np.empty((nf, 3))
        centroid = np.empty((nf, 3))
        area = np.empty(nf)
        fh = np.empty(nf)
        t1 = np.empty((nf, 3))
        t2 = np.empty((nf, 3))
        for i, loop in enumerate(self.faces):
            verts = self.vertices[loop]
            normal[i], centroid[i], area[i], fh[i], t1[i], t2[i] = _polygon_frame(verts)
            dist = np.abs((verts - centroid[i]) @ normal[i])
            if dist.max() > PLANARITY_TOL * fh[i]:
                raise GeometryError(
                    f"face {i} is non-planar: max deviation {dist.max():.3e} "
                    f"exceeds {PLANARITY_TOL:g} * h_f")
        elen = np.linalg.norm(
            self.vertices[self.edges[:, 0]] - self.vertices[self.edges[:, 1]], axis=1)

        nc = len(self.cells)
        cc = np.empty((nc, 3))
        vol = np.empty(nc)
        ch = np.empty(nc)
        signs = []
        for ci, cfaces in enumerate(self.cells):
            vids = np.unique(np.concatenate([self.faces[f] for f in cfaces]))
            verts = self.vertices[vids]
            ch[ci] = max(np.linalg.norm(verts[i] - verts[j])
                         for i in range(len(verts)) for j in range(i + 1, len(verts)))
            vmean = verts.mean(axis=0)
            sgn = np.where(np.einsum("ij,ij->i", centroid[cfaces] - vmean,
                                     normal[cfaces]) > 0, 1, -1).astype(np.int64)
            signs.append(sgn)
            # divergence-theorem volume and centroid via the face-fan tets
            v = 0.0
            c = np.zeros(3)
            for f, s in zip(cfaces, sgn):
                loop = self.faces[f]
                fc = centroid[f]
                for k in range(len(loop)):
                    a = self.vertices[loop[k]]
                    b = self.vertices[loop[(k + 1) % len(loop)]]
                    tv = poly.tet_volume(vmean, fc, a, b) * s
                    v += tv
                    c += tv * (vmean + fc + a + b) / 4.0
            if v <= 0.0:
                raise GeometryError(f"cell {ci} has nonpositive volume {v:.3e}")
            vol[ci] = v
            cc[ci] = c / v
        self.geom = GeometricCache(cc, vol, ch, normal, centroid, area, fh,
                                   t1, t2, elen)

    def _orient_cells(self):
        self.cell_face_sign = []
        face_cells = -np.ones((len(self.faces), 2), dtype=np.int64)
        for ci, cfaces in enumerate(self.cells):
            sgn = np.where(np.einsum(
                "ij,ij->i",
                self.geom.face_centroid[cfaces] - self.geom.cell_centroid[ci],
                self.geom.face_normal[cfaces]) > 0, 1, -1).astype(np.int64)
            self.cell_face_sign.append(sgn)
            for f in cfaces:
                if face_cells[f, 0] < 0:
                    face_cells[f, 0] = ci
                elif face_cells[f, 1] < 0:
                    face_cells[f, 1] = ci
                else:
                    raise TopologyError(f"face {f} referenced by more than two cells")
        self.face_cells = face_cells

    def _validate(self):
        g = self.geom
        for ci, cfaces in enumerate(self.cells):
            n = g.face_normal[cfaces] * self.cell_face_sign[ci][:, None]
            flux = (g.face_area[cfaces][:, None] * n).sum(axis=0)
            tot = g.face_area[cfaces].sum()
            if np.linalg.norm(flux) > CLOSURE_TOL * tot:
                raise TopologyError(
                    f"cell {ci} is not closed: |sum area*n| = "
                    f"{np.linalg.norm(flux):.3e} vs surface {tot:.3e}")
            nv = len(np.unique(np.concatenate([self.faces[f] for f in cfaces])))
            ne = len(np.unique(np.concatenate([self.face_edges[f] for f in cfaces])))
            if nv - ne + len(cfaces) != 2:
                raise TopologyError(f"cell {ci} violates V - E + F = 2")

    # -- derived connectivity ---------------------------------------------

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    @property
    def num_faces(self):
        return len(self.faces)

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.nonzero(self.face_cells[:, 1] < 0)[0]

    def cell_vertices(self, ci: int) -> np.ndarray:
        if self._cell_vertices is None:
            self._cell_vertices = [
                np.unique(np.concatenate([self.faces[f] for f in c]))
                for c in self.cells]
        return self._cell_vertices[ci]

    def cell_edges(self, ci: int) -> np.ndarray:
        if self._cell_edges is None:
            self._cell_edges = [
                np.unique(np.concatenate([self.face_edges[f] for f in c]))
                for c in self.cells]
        return self._cell_edges[ci]

    # -- quadrature --------------------------------------------------------

    def face_quadrature(self, fi: int, degree: int):
        """Points (n,3) and weights summing to the face area."""
        key = (fi, degree)
        cached = self._fquad.get(key)
        if cached is not None:
            return cached
        g = self.geom
        loop = self.faces[fi]
        fc = g.face_centroid[fi]
        pts, wts = [], []
        for k in range(len(loop)):
            a = self.vertices[loop[k]]
            b = self.vertices[loop[(k + 1) % len(loop)]]
            p, w = poly.map_triangle(fc, a, b, degree)
            pts.append(p)
            wts.append(w)
        self._fquad[key] = (np.concatenate(pts), np.concatenate(wts))
        return self._fquad[key]

    def cell_quadrature(self, ci: int, degree: int):
        """Points (n,3) and weights summing to the cell volume."""
        key = (ci, degree)
        cached = self._cquad.get(key)
        if cached is not None:
            return cached
        g = self.geom
        cc = g.cell_centroid[ci]
        pts, wts = [], []
        for f, s in zip(self.cells[ci], self.cell_face_sign[ci]):
            loop = self.faces[f]
            fc = g.face_centroid[f]
            for k in range(len(loop)):
                a = self.vertices[loop[k]]
                b = self.vertices[loop[(k + 1) % len(loop)]]
                if s > 0:
                    p, w = poly.map_tetrahedron(cc, fc, a, b, degree)
                else:
                    p, w = poly.map_tetrahedron(cc, fc, b, a, degree)
                pts.append(p)
                wts.append(w)
        self._cquad[key] = (np.concatenate(pts), np.concatenate(wts))
        return self._cquad[key]

    def face_local_coords(self, fi: int, pts: np.ndarray) -> np.ndarray:
        """Map 3D points on the face to the scaled local frame (n,2)."""
        g = self.geom
        d = np.atleast_2d(pts) - g.face_centroid[fi]
        return np.column_stack([d @ g.face_t1[fi], d @ g.face_t2[fi]]) / g.face_h[fi]

    def face_basis(self, fi: int, degree: int) -> poly.MonomialBasis:
        return poly.MonomialBasis(np.zeros(2), 1.0, degree, dim=2)

    def cell_basis(self, ci: int, degree: int) -> poly.MonomialBasis:
        g = self.geom
        return poly.MonomialBasis(g.cell_centroid[ci], g.cell_h[ci], degree)


# ---------------------------------------------------------------------------
# moment tables

class MomentTable:
    """Cached exact monomial moments per cell and per face."""

    def __init__(self, mesh: PolyMesh):
        self.mesh = mesh
        self._cell = {}
        self._face = {}

    def cell_moments(self, ci: int, k: int) -> np.ndarray:
        """Moments int_P m_alpha for all m in M_k(P), graded lex."""
        cached = self._cell.get(ci)
        if cached is None or cached[0] < k:
            pts, wts = self.mesh.cell_quadrature(ci, k)
            vals = self.mesh.cell_basis(ci, k).eval(pts)
            self._cell[ci] = (k, wts @ vals)
            cached = self._cell[ci]
        return cached[1][:poly.monomial_dim(k)]

    def face_moments(self, fi: int, k: int) -> np.ndarray:
        """Moments int_f m_alpha for all m in M_k(f) (local frame)."""
        cached = self._face.get(fi)
        if cached is None or cached[0] < k:
            pts, wts = self.mesh.face_quadrature(fi, k)
            lc = self.mesh.face_local_coords(fi, pts)
            vals = self.mesh.face_basis(fi, k).eval(lc)
            self._face[fi] = (k, wts @ vals)
            cached = self._face[fi]
        return cached[1][:poly.monomial_dim(k, 2)]

    def cell_gram(self, ci: int, k: int) -> np.ndarray:
        """Gram matrix int_P m_a m_b for a, b in M_k(P)."""
        mom = self.cell_moments(ci, 2 * k)
        ea = poly.multi_indices(k)
        lookup = poly._index_lookup(2 * k)
        n = len(ea)
        G = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                G[i, j] = G[j, i] = mom[lookup[tuple(ea[i] + ea[j])]]
        return G

    def face_gram(self, fi: int, k: int) -> np.ndarray:
        mom = self.face_moments(fi, 2 * k)
        ea = poly.multi_indices(k, 2)
        lookup = poly._index_lookup(2 * k, 2)
        n = len(ea)
        G = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                G[i, j] = G[j, i] = mom[lookup[tuple(ea[i] + ea[j])]]
        return G


# ---------------------------------------------------------------------------
# structured meshes

def build_structured_mesh(kind: str, n: int, domain=((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))) -> PolyMesh:
    """Uniform mesh of n^3 hexahedra or 2 n^3 triangular prisms of a box."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lo = np.asarray(domain[0], dtype=float)
    hi = np.asarray(domain[1], dtype=float)
    xs = [np.linspace(lo[d], hi[d], n + 1) for d in range(3)]
    vid = {}
    verts = []

    def vert(i, j, k):
        key = (i, j, k)
        if key not in vid:
            vid[key] = len(verts)
            verts.append((xs[0][i], xs[1][j], xs[2][k]))
        return vid[key]

    fid = {}
    faces = []

    def face(loop):
        key = tuple(sorted(loop))
        if key not in fid:
            fid[key] = len(faces)
            faces.append(list(loop))
        return fid[key]

    cells = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                v = [vert(i + a, j + b, k + c)
                     for c in (0, 1) for b in (0, 1) for a in (0, 1)]
                # local corner order: (a,b,c) bit pattern, a fastest
                if kind == "hex":
                    cells.append([
                        face((v[0], v[2], v[6], v[4])),  # x = lo
                        face((v[1], v[3], v[7], v[5])),  # x = hi
                        face((v[0], v[1], v[5], v[4])),  # y = lo
                        face((v[2], v[3], v[7], v[6])),  # y = hi
                        face((v[0], v[1], v[3], v[2])),  # z = lo
                        face((v[4], v[5], v[7], v[6])),  # z = hi
                    ])
                elif kind == "prism":
                    # split along the (v0, v3) diagonal of the xy cross-section
                    diag = face((v[0], v[3], v[7], v[4]))
                    cells.append([
                        face((v[0], v[1], v[3])),
                        face((v[4], v[5], v[7])),
                        face((v[0], v[1], v[5], v[4])),
                        face((v[1], v[3], v[7], v[5])),
                        diag,
                    ])
                    cells.append([
                        face((v[0], v[3], v[2])),
                        face((v[4], v[7], v[6])),
                        face((v[2], v[3], v[7], v[6])),
                        face((v[0], v[2], v[6], v[4])),
                        diag,
                    ])
                else:
                    raise ValueError(f"unknown mesh kind {kind!r}")
    return PolyMesh(np.array(verts), faces, cells)


# ---------------------------------------------------------------------------
# boundary classification and regularity report

def classify_boundary(mesh: PolyMesh, predicate, name: str = "default") -> PolyMesh:
    """Tag boundary faces via a barycenter predicate returning 'D' or 'N'.

    Mutates (and returns) the mesh's tag dictionary; the Dirichlet set must
    end up nonempty.
    """
    tags = np.zeros(mesh.num_faces, dtype=np.int64)
    for f in mesh.boundary_faces:
        t = predicate(mesh.geom.face_centroid[f])
        if t in ("D", DIRICHLET):
            tags[f] = DIRICHLET
        elif t in ("N", NEUMANN):
            tags[f] = NEUMANN
        else:
            raise ValueError(f"predicate returned {t!r}, expected 'D' or 'N'")
    if not np.any(tags == DIRICHLET):
        raise EmptyDirichletError(f"tag set {name!r} has no Dirichlet faces")
    mesh.boundary_tags[name] = tags
    return mesh


@dataclass
class RegularityReport:
    star_shaped_ok: np.ndarray   # per cell, barycenter-kernel heuristic
    face_ok: np.ndarray          # per cell, all faces star-shaped wrt disk
    edge_ok: np.ndarray          # per cell, h_e >= rho h_P (exact check)

    @property
    def pass_fraction(self) -> float:
        ok = self.star_shaped_ok & self.face_ok & self.edge_ok
        return float(np.mean(ok))


def check_regularity(mesh: PolyMesh, rho: float) -> RegularityReport:
    """Diagnostic report for the shape-regularity assumptions.

    The edge criterion is exact.  Cell/face star-shapedness is estimated with
    respect to the barycenter (inscribed radius >= rho h_P, following the
    stated face criterion which also scales with h_P); it is a heuristic
    diagnostic, not a gate.
    """
    g = mesh.geom
    nc = mesh.num_cells
    star = np.zeros(nc, dtype=bool)
    fok = np.zeros(nc, dtype=bool)
    eok = np.zeros(nc, dtype=bool)
    for ci in range(nc):
        hp = g.cell_h[ci]
        eok[ci] = bool(np.all(g.edge_length[mesh.cell_edges(ci)] >= rho * hp))
        # cell: distance from barycenter to each face plane, with the
        # barycenter on the inner side of every face
        dists = []
        inner = True
        for f, s in zip(mesh.cells[ci], mesh.cell_face_sign[ci]):
            d = (g.cell_centroid[ci] - g.face_centroid[f]) @ (s * g.face_normal[f])
            inner &= d < 0
            dists.append(-d)
        star[ci] = inner and min(dists) >= rho * hp
        # faces: distance from the face barycenter to each edge line
        ok = True
        for f in mesh.cells[ci]:
            loop = mesh.faces[f]
            rmin = np.inf
            for k in range(len(loop)):
                a = mesh.vertices[loop[k]]
                b = mesh.vertices[loop[(k + 1) % len(loop)]]
                t = b - a
                w = g.face_centroid[f] - a
                rmin = min(rmin, np.linalg.norm(np.cross(w, t)) / np.linalg.norm(t))
            ok &= rmin >= rho * hp
        fok[ci] = ok
    return RegularityReport(star, fok, eok)
