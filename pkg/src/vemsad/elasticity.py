"""Local operators of the displacement/pressure pair at order k1 = 2.

Displacement DoFs per cell: 3 values per vertex, 3 values per edge midpoint,
3 constant face moments per face (area-normalized), and 3 divergence moments
against the linear cell monomials (volume-normalized).  The enhanced face
spaces are never materialized: each face carries a small projection operator
that turns face DoFs into exact face moments, which is all the cell-level
energy projection needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import poly
from .errors import SingularProjectionError
from .mesh import MomentTable, PolyMesh

K1 = 2
NPOLY = 3 * poly.monomial_dim(K1)  # 30 vector monomials


# ---------------------------------------------------------------------------
# face machinery (scalar, order 2)

class FaceScalarSpace:
    """Moments of an enhanced scalar face VE function from its face DoFs.

    Face DoFs (order 2): values at the nv loop vertices, values at the nv
    edge midpoints, and the area-normalized constant moment.  The face energy
    projection onto P2(f) makes every moment against face monomials of degree
    1..3 computable; the constant moment is a DoF.
    """

    def __init__(self, mesh: PolyMesh, mt: MomentTable, fi: int):
        g = mesh.geom
        loop = mesh.faces[fi]
        nv = len(loop)
        self.fi = fi
        self.nv = nv
        self.ndof = 2 * nv + 1
        h = g.face_h[fi]
        area = g.face_area[fi]
        self.area = area

        vloc = mesh.face_local_coords(fi, mesh.vertices[loop])
        mids = 0.5 * (mesh.vertices[loop] + mesh.vertices[np.roll(loop, -1)])
        mloc = mesh.face_local_coords(fi, mids)
        self.vertex_local = vloc
        self.mid_local = mloc

        dim2 = poly.monomial_dim(2, 2)          # 6
        fm = mt.face_moments(fi, 5)
        exps2 = poly.multi_indices(2, 2)

        # stiffness of the local P2 basis: (1/h^2) sum_d int (d_d m_a)(d_d m_b)
        grads = [poly.grad_coeffs(np.eye(dim2)[a], 2, h, dim=2)
                 for a in range(dim2)]
        lookup1 = poly._index_lookup(2, 2)
        exps1 = poly.multi_indices(1, 2)
        G1f = np.empty((len(exps1), len(exps1)))
        for i in range(len(exps1)):
            for j in range(len(exps1)):
                G1f[i, j] = fm[lookup1[tuple(exps1[i] + exps1[j])]]
        K = np.empty((dim2, dim2))
        for a in range(dim2):
            for b in range(dim2):
                K[a, b] = sum(grads[a][:, d] @ G1f @ grads[b][:, d]
                              for d in range(2))

        # right side of the energy projection per face DoF:
        #   -laplace(m_a) * int_f v  +  sum_e Simpson(v * dn m_a)
        B = np.zeros((dim2, self.ndof))
        basis1 = poly.MonomialBasis(np.zeros(2), 1.0, 1, dim=2)
        for a in range(dim2):
            lap = poly.div_coeffs(grads[a], 1, h, dim=2)[0]
            B[a, 2 * nv] += -lap * area  # int_f v = area * mean DoF
            for e in range(nv):
                pa, pb = vloc[e], vloc[(e + 1) % nv]
                t = pb - pa
                ne = np.array([t[1], -t[0]])
                ne /= np.linalg.norm(ne)
                L = np.linalg.norm(mesh.vertices[loop[(e + 1) % nv]]
                                   - mesh.vertices[loop[e]])
                for pt, dof, wgt in ((pa, e, L / 6.0),
                                     (mloc[e], nv + e, 4.0 * L / 6.0),
                                     (pb, (e + 1) % nv, L / 6.0)):
                    gval = (basis1.eval(pt[None]) @ grads[a]).ravel() @ ne
                    B[a, dof] += wgt * gval

        # constant-fixing row: int_f (proj - v) = 0
        crow_lhs = fm[:dim2][None, :]
        crow_rhs = np.zeros((1, self.ndof))
        crow_rhs[0, 2 * nv] = area

        A = np.vstack([K, crow_lhs])
        R = np.vstack([B, crow_rhs])
        self.proj, *_ = np.linalg.lstsq(A, R, rcond=None)  # (6, ndof)

        # moment matrix: DoFs -> int_f v m for all m in M_2(f)
        lookup = poly._index_lookup(4, 2)
        fexp = poly.multi_indices(2, 2)
        mom = np.zeros((dim2, self.ndof))
        mom[0, 2 * nv] = area
        for q in range(1, dim2):
            prod = np.array([fm[lookup[tuple(fexp[q] + exps2[a])]]
                             for a in range(dim2)])
            mom[q] = prod @ self.proj
        self.moments = mom  # (6, ndof)

    def dof_values(self, func, mesh: PolyMesh) -> np.ndarray:
        """Interpolate an analytic scalar function into the face DoFs."""
        loop = mesh.faces[self.fi]
        verts = mesh.vertices[loop]
        mids = 0.5 * (verts + mesh.vertices[np.roll(loop, -1)])
        pts, wts = mesh.face_quadrature(self.fi, 4)
        vals = np.concatenate([
            np.array([func(p) for p in verts]),
            np.array([func(p) for p in mids]),
            [np.sum(wts * np.array([func(p) for p in pts])) / self.area],
        ])
        return vals


class FaceSpaceCache:
    """Per-mesh cache of FaceScalarSpace objects (faces are shared by cells)."""

    def __init__(self, mesh: PolyMesh, mt: MomentTable):
        self.mesh = mesh
        self.mt = mt
        self._spaces = {}

    def __call__(self, fi: int) -> FaceScalarSpace:
        if fi not in self._spaces:
            self._spaces[fi] = FaceScalarSpace(self.mesh, self.mt, fi)
        return self._spaces[fi]


# ---------------------------------------------------------------------------
# local DoF layout

@dataclass
class ElasticityDofLayout:
    """Index bookkeeping for the local displacement DoF vector of one cell."""

    vertices: np.ndarray   # global vertex ids, local order
    edges: np.ndarray      # global edge ids, local order
    faces: np.ndarray      # global face ids, local order
    ndof: int

    def vertex_slot(self, local_v: int, comp: int) -> int:
        return 3 * local_v + comp

    def edge_slot(self, local_e: int, comp: int) -> int:
        return 3 * len(self.vertices) + 3 * local_e + comp

    def face_slot(self, local_f: int, comp: int) -> int:
        return 3 * (len(self.vertices) + len(self.edges)) + 3 * local_f + comp

    def div_slot(self, i: int) -> int:
        return 3 * (len(self.vertices) + len(self.edges) + len(self.faces)) + i


# ---------------------------------------------------------------------------
# the local operator bundle

@dataclass
class ElasticityLocalOperators:
    layout: ElasticityDofLayout
    pi_eps: np.ndarray      # (30, ndof) DoFs -> (P2)^3 coefficients
    interp: np.ndarray      # (ndof, 30) DoFs of the vector monomials
    stiffness: np.ndarray   # 2 mu consistency + S1
    consistency: np.ndarray
    stab: np.ndarray
    div_matrix: np.ndarray  # (4, ndof) DoFs -> P1 coefficients of div v
    coupling: np.ndarray    # (4, ndof): -int_P m_beta div v_i
    pressure_mass: np.ndarray  # (4, 4) Gram of M_1(P)
    int_v: np.ndarray       # (3, ndof): int_P v per component
    mono_int: np.ndarray    # (4,): int_P m_beta


class ElasticityCell:
    """Builds all order-2 local operators for a single cell."""

    def __init__(self, mesh: PolyMesh, mt: MomentTable, ci: int,
                 face_cache: FaceSpaceCache):
        self.mesh = mesh
        self.mt = mt
        self.ci = ci
        self.faces = face_cache
        g = mesh.geom
        self.hP = g.cell_h[ci]
        self.vol = g.cell_volume[ci]
        self.xP = g.cell_centroid[ci]
        verts = mesh.cell_vertices(ci)
        edges = mesh.cell_edges(ci)
        cfaces = mesh.cells[ci]
        self.layout = ElasticityDofLayout(
            verts, edges, cfaces, 3 * (len(verts) + len(edges) + len(cfaces)) + 3)
        self._vpos = {int(v): i for i, v in enumerate(verts)}
        self._epos = {int(e): i for i, e in enumerate(edges)}
        self._fpos = {int(f): i for i, f in enumerate(cfaces)}
        self._fsign = {int(f): int(s)
                       for f, s in zip(cfaces, mesh.cell_face_sign[ci])}

    # -- face helpers ------------------------------------------------------

    def _face_dof_slots(self, fi: int, comp: int) -> np.ndarray:
        """Cell DoF slots matching the scalar face DoF order, one component."""
        loop = self.mesh.faces[fi]
        fs = self.faces(fi)
        lay = self.layout
        slots = np.empty(fs.ndof, dtype=np.int64)
        for k, v in enumerate(loop):
            slots[k] = lay.vertex_slot(self._vpos[int(v)], comp)
        for k, e in enumerate(self.mesh.face_edges[fi]):
            slots[fs.nv + k] = lay.edge_slot(self._epos[int(e)], comp)
        slots[2 * fs.nv] = lay.face_slot(self._fpos[fi], comp)
        return slots

    def _face_poly_coeffs(self, fi: int, func, degree: int) -> np.ndarray:
        """Expand a polynomial (given as a point evaluator) in face monomials."""
        pts, wts = self.mesh.face_quadrature(fi, 2 * degree)
        lc = self.mesh.face_local_coords(fi, pts)
        vals = self.mesh.face_basis(fi, degree).eval(lc)
        Gf = self.mt.face_gram(fi, degree)
        rhs = vals.T @ (wts * func(pts))
        return np.linalg.solve(Gf, rhs)

    def boundary_moment_row(self, fi: int, comp: int, weight_coeffs: np.ndarray) -> np.ndarray:
        """Row over cell DoFs giving int_f v_comp * w, w in face monomials <= 2."""
        fs = self.faces(fi)
        row = np.zeros(self.layout.ndof)
        slots = self._face_dof_slots(fi, comp)
        row[slots] = weight_coeffs @ fs.moments[:len(weight_coeffs)]
        return row

    def boundary_pairing(self, wfuncs, degree: int) -> np.ndarray:
        """Row: sum_f sum_j int_f v_j * w_j for a vector polynomial field w."""
        row = np.zeros(self.layout.ndof)
        for fi in self.mesh.cells[self.ci]:
            for j in range(3):
                cf = self._face_poly_coeffs(fi, lambda p, j=j: wfuncs(p)[:, j], degree)
                row += self.boundary_moment_row(fi, j, cf)
        return row

    def _p1_restriction(self, fi: int) -> np.ndarray:
        """(3, 4) map: cell M_1(P) coefficients -> face M_1(f) coefficients.

        Exact: the restriction of a degree-1 polynomial to a planar face is
        again degree 1 in the face frame.
        """
        mesh = self.mesh
        pts, wts = mesh.face_quadrature(fi, 2)
        lc = mesh.face_local_coords(fi, pts)
        fb = mesh.face_basis(fi, 1).eval(lc)          # (np, 3)
        c1 = mesh.cell_basis(self.ci, 1).eval(pts)    # (np, 4)
        Gf = self.mt.face_gram(fi, 1)
        return np.linalg.solve(Gf, fb.T @ (wts[:, None] * c1))

    # -- operators ---------------------------------------------------------

    def build(self, mu: float, stab_scale: float = 1.0) -> ElasticityLocalOperators:
        mesh, mt, ci = self.mesh, self.mt, self.ci
        lay = self.layout
        N = lay.ndof
        hP, vol, xP = self.hP, self.vol, self.xP

        G1 = mt.cell_gram(ci, 1)
        mom2 = mt.cell_moments(ci, 2)
        basis2 = mesh.cell_basis(ci, 2)

        # per-face precomputation: P1 restriction, moment rows, DoF slots
        fdata = []
        for fi in mesh.cells[ci]:
            fs = self.faces(fi)
            fdata.append({
                "fi": int(fi),
                "n": mesh.geom.face_normal[fi] * self._fsign[fi],
                "Pf": self._p1_restriction(fi),
                "mom1": fs.moments[:3],           # (3, ndof_f): weights 1..M_1
                "slots": [self._face_dof_slots(int(fi), j) for j in range(3)],
            })

        # vector monomial calculus
        eps_list = []
        dive_list = []
        dim10 = poly.monomial_dim(2)
        eye30 = np.eye(dim10)
        for a in range(dim10):
            for j in range(3):
                c = np.zeros((dim10, 3))
                c[:, j] = eye30[a]
                eps_list.append(poly.sym_grad_coeffs(c, 2, hP))
                dive_list.append(poly.div_sym_grad_coeffs(c, 2, hP)[0])
        Eall = np.array(eps_list)        # (30, 4, 3, 3)
        Dive = np.array(dive_list)       # (30, 3)

        # moments of div v against M_1(P): the mean comes from the boundary
        # flux, the linear moments are the divergence DoFs by definition
        dmom = np.zeros((4, N))
        for fd in fdata:
            for j in range(3):
                dmom[0, fd["slots"][j]] += fd["n"][j] * fd["mom1"][0]
        for i in range(3):
            dmom[1 + i, lay.div_slot(i)] = vol
        div_matrix = np.linalg.solve(G1, dmom)

        # int_P v per component via the potential q = hP * m_{1+j}, grad q = e_j
        int_v = np.zeros((3, N))
        for j in range(3):
            row = np.zeros(N)
            row[lay.div_slot(j)] = -hP * vol
            for fd in fdata:
                wrow = (hP * fd["Pf"][:, 1 + j]) @ fd["mom1"]
                for l in range(3):
                    row[fd["slots"][l]] += fd["n"][l] * wrow
            int_v[j] = row

        # energy Gram of the 30 vector monomials
        Geps = np.einsum("aipq,ij,bjpq->ab", Eall, G1, Eall)

        # rigid body motions (scaled): translations e_i and e_i ^ xhat,
        # as M_1(P) coefficient arrays (4, 3)
        levi = np.zeros((3, 3, 3))
        for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            levi[i, j, k] = 1.0
            levi[i, k, j] = -1.0
        rbm_coeffs = np.zeros((6, 4, 3))
        for r in range(3):
            rbm_coeffs[r, 0, r] = 1.0
        for r in range(3):
            for j in range(3):
                for l in range(3):
                    rbm_coeffs[3 + r, 1 + l, j] = levi[j, r, l]

        # LHS rows: RBM boundary products against the 30 monomials
        R = np.zeros((6, NPOLY))
        for fd in fdata:
            pts, wts = mesh.face_quadrature(fd["fi"], 3)
            mono = basis2.eval(pts)                         # (np, 10)
            rbv = np.einsum("pa,raj->rpj",
                            mesh.cell_basis(ci, 1).eval(pts), rbm_coeffs)
            R += np.einsum("p,pa,rpj->raj", wts, mono, rbv).reshape(6, NPOLY)

        # RHS per DoF: -int v . div eps(m_a) + oint v . (eps(m_a) n)
        B = -Dive @ int_v                                   # (30, N)
        for fd in fdata:
            # face coefficients of (eps(m_a) n)_j, exact degree-1 restriction
            epsn = np.einsum("acij,i->acj", Eall, fd["n"])  # (30, 4, 3)
            fc = np.einsum("mc,acj->amj", fd["Pf"], epsn)   # (30, 3, 3)
            for j in range(3):
                B[:, fd["slots"][j]] += fc[:, :, j] @ fd["mom1"]
        Rb = np.zeros((6, N))
        for fd in fdata:
            fc = np.einsum("mc,rcj->rmj", fd["Pf"], rbm_coeffs)
            for j in range(3):
                Rb[:, fd["slots"][j]] += fc[:, :, j] @ fd["mom1"]

        A_full = np.vstack([Geps, R])
        B_full = np.vstack([B, Rb])
        pi_eps, _, rank, _ = np.linalg.lstsq(A_full, B_full, rcond=None)
        if rank < NPOLY:
            raise SingularProjectionError(
                f"energy projection rank {rank} < {NPOLY} on cell {ci}")

        # DoF interpolation of the vector monomials
        D = np.zeros((N, NPOLY))
        vpts = mesh.vertices[lay.vertices]
        mono_v = basis2.eval(vpts)
        emid = 0.5 * (mesh.vertices[mesh.edges[lay.edges, 0]]
                      + mesh.vertices[mesh.edges[lay.edges, 1]])
        mono_e = basis2.eval(emid)
        for a in range(NPOLY):
            ia, j = divmod(a, 3)
            for lv in range(len(lay.vertices)):
                D[lay.vertex_slot(lv, j), a] = mono_v[lv, ia]
            for le in range(len(lay.edges)):
                D[lay.edge_slot(le, j), a] = mono_e[le, ia]
        for lf, fi in enumerate(lay.faces):
            pts, wts = mesh.face_quadrature(fi, 2)
            mom10 = (wts @ basis2.eval(pts)) / mesh.geom.face_area[fi]
            for a in range(NPOLY):
                ia, j = divmod(a, 3)
                D[lay.face_slot(lf, j), a] = mom10[ia]
        lookup1 = poly._index_lookup(1)
        for a in range(NPOLY):
            ia, j = divmod(a, 3)
            c = np.zeros((poly.monomial_dim(2), 3))
            c[ia, j] = 1.0
            dc = poly.div_coeffs(c, 2, hP)  # degree-1 coefficients
            for i in range(3):
                D[lay.div_slot(i), a] = (dc @ G1[:, 1 + i]) / vol

        consistency = 2.0 * mu * pi_eps.T @ Geps @ pi_eps
        resid = np.eye(N) - D @ pi_eps
        stab = stab_scale * 2.0 * mu * hP * resid.T @ resid
        coupling = -(G1 @ div_matrix)
        return ElasticityLocalOperators(
            layout=lay, pi_eps=pi_eps, interp=D,
            stiffness=consistency + stab, consistency=consistency, stab=stab,
            div_matrix=div_matrix, coupling=coupling, pressure_mass=G1,
            int_v=int_v, mono_int=mom2[:4].copy())

    # -- interpolation of analytic fields ----------------------------------

    def interpolate(self, func) -> np.ndarray:
        """DoF vector of a (vectorized) analytic field: func(pts)->(n,3)."""
        mesh, lay = self.mesh, self.layout
        dofs = np.zeros(lay.ndof)
        vv = func(mesh.vertices[lay.vertices])
        for lv in range(len(lay.vertices)):
            for j in range(3):
                dofs[lay.vertex_slot(lv, j)] = vv[lv, j]
        emid = 0.5 * (mesh.vertices[mesh.edges[lay.edges, 0]]
                      + mesh.vertices[mesh.edges[lay.edges, 1]])
        ev = func(emid)
        for le in range(len(lay.edges)):
            for j in range(3):
                dofs[lay.edge_slot(le, j)] = ev[le, j]
        for lf, fi in enumerate(lay.faces):
            pts, wts = mesh.face_quadrature(fi, 4)
            vals = func(pts)
            area = mesh.geom.face_area[fi]
            for j in range(3):
                dofs[lay.face_slot(lf, j)] = np.sum(wts * vals[:, j]) / area
        # divergence moments: int div v xhat_i = oint v.n xhat_i - int v_i / hP
        basis1 = self.mesh.cell_basis(self.ci, 1)
        cpts, cwts = mesh.cell_quadrature(self.ci, 6)
        cvals = func(cpts)
        for i in range(3):
            acc = -np.sum(cwts * cvals[:, i]) / self.hP
            for fi in mesh.cells[self.ci]:
                n = mesh.geom.face_normal[fi] * self._fsign[fi]
                pts, wts = mesh.face_quadrature(fi, 5)
                vn = func(pts) @ n
                acc += np.sum(wts * vn * basis1.eval(pts)[:, 1 + i])
            dofs[lay.div_slot(i)] = acc / self.vol
        return dofs
