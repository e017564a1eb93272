"""Local operators of the flux/concentration pair at order k2 = 1.

Flux DoFs per cell: 3 moments of the normal trace against M_1(f) per face
(area-normalized, taken with respect to the globally fixed face normal) and
3 interior moments against the wedge basis of G_1^plus(P) (volume-normalized).
The concentration space is piecewise constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import poly
from .errors import NonSPDError, SingularProjectionError
from .mesh import MomentTable, PolyMesh

K2 = 1
NPOLY1 = 3 * poly.monomial_dim(1)  # 12 vector monomials of (P1)^3


@dataclass
class FluxDofLayout:
    faces: np.ndarray   # global face ids, local order
    ndof: int

    def face_slot(self, local_f: int, m: int) -> int:
        return 3 * local_f + m

    def interior_slot(self, i: int) -> int:
        return 3 * len(self.faces) + i


@dataclass
class FluxLocalOperators:
    layout: FluxDofLayout
    pi0: np.ndarray            # (12, ndof) DoFs -> (P1)^3 monomial coefficients
    interp: np.ndarray         # (ndof, 12) DoFs of the vector monomials
    div_row: np.ndarray        # (ndof,): constant div xi per DoF
    weighted_mass: np.ndarray  # consistency + S2
    consistency: np.ndarray
    stab: np.ndarray
    minv_scale: float


class HdivCell:
    """Builds all order-1 H(div) local operators for a single cell."""

    def __init__(self, mesh: PolyMesh, mt: MomentTable, ci: int):
        self.mesh = mesh
        self.mt = mt
        self.ci = ci
        g = mesh.geom
        self.hP = g.cell_h[ci]
        self.vol = g.cell_volume[ci]
        self.xP = g.cell_centroid[ci]
        cfaces = mesh.cells[ci]
        self.layout = FluxDofLayout(cfaces, 3 * len(cfaces) + 3)
        self._fsign = {int(f): int(s)
                       for f, s in zip(cfaces, mesh.cell_face_sign[ci])}
        # orientation of the stored normal relative to the canonical
        # (owner-outward) global normal
        self._gsign = {}
        for f in cfaces:
            owner = mesh.face_cells[int(f), 0]
            osign = mesh.cell_face_sign[owner][
                int(np.nonzero(mesh.cells[owner] == f)[0][0])]
            self._gsign[int(f)] = int(osign)
        self._trace_cache = {}
        self._build_static()

    def global_normal(self, fi: int) -> np.ndarray:
        """Canonical face normal: outward for the owning (lower-index) cell."""
        return self.mesh.geom.face_normal[fi] * self._gsign[fi]

    def outward_sign(self, fi: int) -> int:
        """Sign of the canonical normal as seen outward from this cell."""
        return self._fsign[fi] * self._gsign[fi]

    # -- static (iterate-independent) pieces --------------------------------

    def _face_trace_matrix(self, fi: int):
        """Coefficients of xi.n_canonical in M_1(f) from the 3 face DoFs."""
        if fi not in self._trace_cache:
            Gf = self.mt.face_gram(fi, 1)
            area = self.mesh.geom.face_area[fi]
            self._trace_cache[fi] = np.linalg.solve(Gf, area * np.eye(3))
        return self._trace_cache[fi]

    def _build_static(self):
        mesh, mt, ci = self.mesh, self.mt, self.ci
        lay = self.layout
        N = lay.ndof
        hP, vol = self.hP, self.vol
        basis2 = mesh.cell_basis(ci, 2)
        G1 = mt.cell_gram(ci, 1)

        # constant divergence: (1/|P|) oint xi . n_out
        div_row = np.zeros(N)
        for lf, fi in enumerate(lay.faces):
            s = self.outward_sign(fi)
            area = mesh.geom.face_area[fi]
            div_row[lay.face_slot(lf, 0)] = s * area / vol
        self.div_row = div_row

        # projection basis: grad(M_{2\0}) (9 fields) + wedge basis (3 fields)
        dim2 = poly.monomial_dim(2)
        qexp = range(1, dim2)
        gradQ = []
        for q in qexp:
            c = np.zeros(dim2)
            c[q] = 1.0
            gradQ.append(poly.grad_coeffs(c, 2, hP))   # (4, 3) coefficients
        wedge = poly.wedge_basis(1)                     # (3, 4, 3)
        Qbasis = np.array(gradQ + [w for w in wedge])   # (12, 4, 3)

        # moments of xi against the projection basis, all from DoFs
        T = np.zeros((12, N))
        mom2 = mt.cell_moments(ci, 2)
        for r, q in enumerate(qexp):
            # int xi . grad q = -(div xi) int q + oint (xi.n_out) q
            T[r] = -mom2[q] * div_row
            for lf, fi in enumerate(lay.faces):
                s = self.outward_sign(fi)
                trace = self._face_trace_matrix(fi)
                pts, wts = mesh.face_quadrature(fi, 3)
                lc = mesh.face_local_coords(fi, pts)
                fb = mesh.face_basis(fi, 1).eval(lc)        # (np, 3)
                qv = basis2.eval(pts)[:, q]
                pair = fb.T @ (wts * qv)                     # (3,)
                for mloc in range(3):
                    T[r, lay.face_slot(lf, mloc)] += s * pair @ trace[:, mloc]
        for i in range(3):
            T[9 + i, lay.interior_slot(i)] = vol

        # Gram of the projection basis and expansion into (M_1)^3
        GQ = np.empty((12, 12))
        for a in range(12):
            for b in range(a, 12):
                GQ[a, b] = GQ[b, a] = sum(
                    Qbasis[a][:, d] @ G1 @ Qbasis[b][:, d] for d in range(3))
        try:
            coefQ = np.linalg.solve(GQ, T)
        except np.linalg.LinAlgError as exc:
            raise SingularProjectionError(
                f"flux projection Gram singular on cell {ci}") from exc
        # pi0 in flat vector-monomial coefficients, index a = 3*imono + comp
        E = Qbasis.reshape(12, 12).T     # columns: basis fields flattened
        self.pi0 = E @ coefQ             # (12, N)

        # DoF interpolation of the vector monomials
        D = np.zeros((N, 12))
        basis1 = mesh.cell_basis(ci, 1)
        for lf, fi in enumerate(lay.faces):
            n = self.global_normal(fi)
            area = mesh.geom.face_area[fi]
            pts, wts = mesh.face_quadrature(fi, 2)
            lc = mesh.face_local_coords(fi, pts)
            fb = mesh.face_basis(fi, 1).eval(lc)
            mono = basis1.eval(pts)
            for a in range(12):
                ia, j = divmod(a, 3)
                vn = mono[:, ia] * n[j]
                for mloc in range(3):
                    D[lay.face_slot(lf, mloc), a] = D[lay.face_slot(lf, mloc), a] \
                        + np.sum(wts * vn * fb[:, mloc]) / area
        for a in range(12):
            ia, j = divmod(a, 3)
            for i in range(3):
                w = poly.wedge_basis(1)[i]      # (4, 3) coefficients
                D[lay.interior_slot(i), a] += (w[:, j] @ G1[:, ia]) / vol
        self.interp = D
        self._G1 = G1

    # -- iterate-dependent operator bundle ----------------------------------

    def build(self, minv_field, quad_order: int = 4,
              stab_scale: float = 1.0) -> FluxLocalOperators:
        """Weighted mass + stabilisation for a given inverse-mobility field.

        ``minv_field(pts) -> (n, 3, 3)`` evaluates the SPD matrix coefficient
        at physical points.
        """
        mesh, ci = self.mesh, self.ci
        N = self.layout.ndof
        pts, wts = mesh.cell_quadrature(ci, quad_order)
        Minv = np.asarray(minv_field(pts))
        sym_err = np.abs(Minv - np.transpose(Minv, (0, 2, 1))).max()
        scale = np.abs(Minv).max()
        if sym_err > 1e-12 * max(scale, 1.0):
            raise NonSPDError(f"inverse mobility not symmetric on cell {ci}")
        eig = np.linalg.eigvalsh(0.5 * (Minv + np.transpose(Minv, (0, 2, 1))))
        if eig.min() <= 1e-12 * max(scale, 1.0):
            raise NonSPDError(
                f"inverse mobility not positive definite on cell {ci}: "
                f"min eigenvalue {eig.min():.3e}")

        basis1 = mesh.cell_basis(ci, 1)
        mono = basis1.eval(pts)   # (np, 4)
        # weighted Gram of the 12 vector monomials
        Wm = np.einsum("p,pa,pij,pb->aibj", wts, mono, Minv, mono).reshape(12, 12)
        consistency = self.pi0.T @ Wm @ self.pi0

        mscale = float(np.trace(minv_field(self.xP[None])[0]) / 3.0)
        resid = np.eye(N) - self.interp @ self.pi0
        stab = stab_scale * mscale * self.vol * resid.T @ resid
        return FluxLocalOperators(
            layout=self.layout, pi0=self.pi0, interp=self.interp,
            div_row=self.div_row, weighted_mass=consistency + stab,
            consistency=consistency, stab=stab, minv_scale=mscale)

    # -- interpolation and boundary data ------------------------------------

    def fortin_interpolate(self, func, quad_order: int = 6) -> np.ndarray:
        """DoF vector of an analytic field: func(pts)->(n,3)."""
        mesh, lay = self.mesh, self.layout
        dofs = np.zeros(lay.ndof)
        for lf, fi in enumerate(lay.faces):
            n = self.global_normal(fi)
            area = mesh.geom.face_area[fi]
            pts, wts = mesh.face_quadrature(fi, quad_order)
            lc = mesh.face_local_coords(fi, pts)
            fb = mesh.face_basis(fi, 1).eval(lc)
            vn = func(pts) @ n
            for mloc in range(3):
                dofs[lay.face_slot(lf, mloc)] = np.sum(wts * vn * fb[:, mloc]) / area
        pts, wts = mesh.cell_quadrature(self.ci, quad_order)
        vals = func(pts)
        basis1 = mesh.cell_basis(self.ci, 1)
        mono = basis1.eval(pts)
        for i in range(3):
            w = poly.wedge_basis(1)[i]
            wedge_vals = mono @ w                    # (np, 3)
            dofs[lay.interior_slot(i)] = np.sum(
                wts * np.einsum("pj,pj->p", vals, wedge_vals)) / self.vol
        return dofs

    def dirichlet_load(self, fi: int, phi_d, quad_order: int = 6) -> np.ndarray:
        """Row: <phi_D, xi.n_out>_f for a boundary face of this cell."""
        mesh, lay = self.mesh, self.layout
        lf = int(np.nonzero(lay.faces == fi)[0][0])
        s = self.outward_sign(fi)
        trace = self._face_trace_matrix(fi)
        pts, wts = mesh.face_quadrature(fi, quad_order)
        lc = mesh.face_local_coords(fi, pts)
        fb = mesh.face_basis(fi, 1).eval(lc)
        phiv = np.asarray(phi_d(pts), dtype=float)
        pair = fb.T @ (wts * phiv)
        row = np.zeros(lay.ndof)
        for mloc in range(3):
            row[lay.face_slot(lf, mloc)] = s * pair @ trace[:, mloc]
        return row
