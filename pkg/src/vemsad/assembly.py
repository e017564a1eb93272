"""Global DoF numbering, constraint elimination, and block-system assembly.

Both subproblems produce a symmetric block system [[A, B^T], [B, -C]] over
[primal_free; secondary]; Dirichlet-type DoFs are eliminated with (possibly
nonzero) prescribed values folded into the right side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConstraintError, DimensionError
from .mesh import DIRICHLET, NEUMANN, PolyMesh


@dataclass
class DofMap:
    """Global numbering for all four fields plus constraint bookkeeping."""

    mesh: PolyMesh
    disp_tags: str = "default"   # tag set constraining displacement (Gamma_D)
    flux_tags: str = "default"   # tag set constraining the flux (Gamma_N)

    def __post_init__(self):
        m = self.mesh
        nv, ne, nf, nc = m.num_vertices, m.num_edges, m.num_faces, m.num_cells
        self.n_disp = 3 * (nv + ne + nf + nc)
        self.n_pres = 4 * nc
        self.n_flux = 3 * nf + 3 * nc
        self.n_conc = nc
        self._off_edge = 3 * nv
        self._off_face = 3 * (nv + ne)
        self._off_div = 3 * (nv + ne + nf)

        disp_tags = m.boundary_tags[self.disp_tags]
        fixed = np.zeros(self.n_disp, dtype=bool)
        for f in np.nonzero(disp_tags == DIRICHLET)[0]:
            for v in m.faces[f]:
                fixed[3 * v:3 * v + 3] = True
            for e in m.face_edges[f]:
                fixed[self._off_edge + 3 * e:self._off_edge + 3 * e + 3] = True
            fixed[self._off_face + 3 * f:self._off_face + 3 * f + 3] = True
        if not fixed.any():
            raise ConstraintError("no Dirichlet displacement DoFs")
        self.disp_fixed = fixed

        flux_tags = m.boundary_tags[self.flux_tags]
        if not np.any(flux_tags == DIRICHLET):
            raise ConstraintError("no Dirichlet faces in the flux tag set")
        fixedz = np.zeros(self.n_flux, dtype=bool)
        for f in np.nonzero(flux_tags == NEUMANN)[0]:
            fixedz[3 * f:3 * f + 3] = True
        self.flux_fixed = fixedz

    # -- global ids matching the local layouts ------------------------------

    def disp_cell_dofs(self, layout) -> np.ndarray:
        ids = np.empty(layout.ndof, dtype=np.int64)
        for lv, v in enumerate(layout.vertices):
            ids[3 * lv:3 * lv + 3] = np.arange(3 * v, 3 * v + 3)
        o = 3 * len(layout.vertices)
        for le, e in enumerate(layout.edges):
            ids[o + 3 * le:o + 3 * le + 3] = \
                self._off_edge + np.arange(3 * e, 3 * e + 3)
        o += 3 * len(layout.edges)
        for lf, f in enumerate(layout.faces):
            ids[o + 3 * lf:o + 3 * lf + 3] = \
                self._off_face + np.arange(3 * f, 3 * f + 3)
        return ids

    def disp_cell_dofs_full(self, ci: int, layout) -> np.ndarray:
        ids = self.disp_cell_dofs(layout)
        ids[-3:] = self._off_div + np.arange(3 * ci, 3 * ci + 3)
        return ids

    def flux_cell_dofs(self, ci: int, layout) -> np.ndarray:
        ids = np.empty(layout.ndof, dtype=np.int64)
        for lf, f in enumerate(layout.faces):
            ids[3 * lf:3 * lf + 3] = np.arange(3 * f, 3 * f + 3)
        ids[-3:] = 3 * self.mesh.num_faces + np.arange(3 * ci, 3 * ci + 3)
        return ids


@dataclass
class BlockSystem:
    """[[A, B^T], [B, -C]] over [primal_free; secondary], with lifted data."""

    matrix: sp.csc_matrix
    rhs: np.ndarray
    primal_free: np.ndarray      # indices of free primal DoFs
    n_primal_total: int
    primal_values: np.ndarray    # prescribed values on eliminated DoFs
    n_secondary: int

    def solve(self, factor_cache: dict | None = None):
        """Direct solve; returns (primal_full, secondary)."""
        if factor_cache is not None and "lu" in factor_cache:
            lu = factor_cache["lu"]
        else:
            lu = spla.splu(self.matrix)
            if factor_cache is not None:
                factor_cache["lu"] = lu
        x = lu.solve(self.rhs)
        nfree = len(self.primal_free)
        primal = self.primal_values.copy()
        primal[self.primal_free] = x[:nfree]
        return primal, x[nfree:]


def _accumulate(rows, cols, vals, gdofs_i, gdofs_j, local):
    ii, jj = np.meshgrid(gdofs_i, gdofs_j, indexing="ij")
    rows.append(ii.ravel())
    cols.append(jj.ravel())
    vals.append(np.asarray(local).ravel())


def _condense(A, B, C, rhs_u, rhs_p, fixed, values, n_secondary):
    """Eliminate fixed primal DoFs with prescribed values."""
    free = np.nonzero(~fixed)[0]
    con = np.nonzero(fixed)[0]
    A = A.tocsr()
    B = B.tocsr()
    ru = rhs_u[free] - A[free][:, con] @ values[con]
    rp = rhs_p - B[:, con] @ values[con]
    K = sp.bmat([[A[free][:, free], B[:, free].T],
                 [B[:, free], -C]], format="csc")
    return K, np.concatenate([ru, rp]), free


def assemble_elasticity(mesh: PolyMesh, dofmap: DofMap, elas_ops: list,
                        params, law, phi_cell: np.ndarray, fbar: np.ndarray,
                        dirichlet_values: np.ndarray | None = None,
                        extra_load: np.ndarray | None = None) -> BlockSystem:
    """Global system of the displacement/pressure pair.

    ``phi_cell`` is the current piecewise-constant concentration iterate,
    ``fbar`` the (n_cells, 3) cell averages of the body load.  The pressure
    equation right side carries -lambda^{-1} ell(phi_h) so that the pair is
    consistent with p = -lambda div u + ell(phi).
    """
    nd, npr = dofmap.n_disp, dofmap.n_pres
    rows, cols, vals = [], [], []
    rowsB, colsB, valsB = [], [], []
    C = sp.lil_matrix((npr, npr))
    rhs_u = np.zeros(nd)
    rhs_p = np.zeros(npr)
    lam_inv = 1.0 / params.lam
    ell_vals = law.eval_ell(phi_cell)
    for ci, ops in enumerate(elas_ops):
        g = dofmap.disp_cell_dofs_full(ci, ops.layout)
        _accumulate(rows, cols, vals, g, g, ops.stiffness)
        pg = np.arange(4 * ci, 4 * ci + 4)
        _accumulate(rowsB, colsB, valsB, pg, g, ops.coupling)
        C[4 * ci:4 * ci + 4, 4 * ci:4 * ci + 4] = lam_inv * ops.pressure_mass
        rhs_u[g] += ops.int_v.T @ fbar[ci]
        rhs_p[pg] += -lam_inv * ell_vals[ci] * ops.mono_int
    A = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nd, nd))
    B = sp.coo_matrix((np.concatenate(valsB),
                       (np.concatenate(rowsB), np.concatenate(colsB))),
                      shape=(npr, nd))
    if extra_load is not None:
        rhs_u = rhs_u + extra_load
    values = np.zeros(nd) if dirichlet_values is None else dirichlet_values
    K, rhs, free = _condense(A, B, C.tocsr(), rhs_u, rhs_p,
                             dofmap.disp_fixed, values, npr)
    return BlockSystem(K, rhs, free, nd, values, npr)


def _rigid_modes(mesh: PolyMesh, dofmap: DofMap) -> np.ndarray:
    """Rigid-body displacement fields evaluated on the displacement DoFs.

    Positional DoFs (vertex, edge-midpoint, face-mean values) carry the rigid
    field at their location; the face mean of a linear field is its centroid
    value, and divergence moments of rigid fields vanish, so the six columns
    are exact DoF vectors of the rigid modes.
    """
    nd = dofmap.n_disp
    pos = np.zeros((nd, 3))
    has_pos = np.zeros(nd, dtype=bool)
    nv, ne, nf = mesh.num_vertices, mesh.num_edges, mesh.num_faces
    pos[:3 * nv] = np.repeat(mesh.vertices, 3, axis=0)
    has_pos[:3 * nv] = True
    emid = 0.5 * (mesh.vertices[mesh.edges[:, 0]]
                  + mesh.vertices[mesh.edges[:, 1]])
    o = dofmap._off_edge
    pos[o:o + 3 * ne] = np.repeat(emid, 3, axis=0)
    has_pos[o:o + 3 * ne] = True
    o = dofmap._off_face
    pos[o:o + 3 * nf] = np.repeat(mesh.geom.face_centroid, 3, axis=0)
    has_pos[o:o + 3 * nf] = True
    comp = np.tile(np.arange(3), nd // 3)
    modes = np.zeros((nd, 6))
    eye = np.eye(3)
    for c in range(3):
        modes[(comp == c) & has_pos, c] = 1.0
    for r in range(3):
        rot = np.cross(eye[r], pos)
        modes[has_pos, 3 + r] = rot[has_pos, comp[has_pos]]
    return modes


@dataclass
class CondensedElasticSystem:
    """Displacement system after exact cell-local pressure elimination.

    The pressure block of the saddle pair is block-diagonal per cell, so p is
    eliminated exactly: the remaining displacement matrix is symmetric
    positive definite and keeps the cell-block sparsity.  Suited to large
    meshes where a direct factorization of the indefinite pair does not fit
    in memory; an algebraic-multigrid preconditioned CG solve uses the rigid
    modes as the near-nullspace.
    """

    matrix: sp.csc_matrix        # SPD over free displacement DoFs
    load_u: np.ndarray           # body/traction/Dirichlet part of the load
    coupling_free: sp.csr_matrix   # B[:, free]
    coupling_full: sp.csr_matrix   # B over all displacement DoFs
    cinv: np.ndarray             # (n_cells, 4, 4) inverse pressure blocks
    ell_scale: np.ndarray        # (n_cells, 4): rhs_p = ell_scale * ell[:,None]
    primal_free: np.ndarray
    primal_values: np.ndarray
    near_nullspace: np.ndarray   # rigid modes restricted to free DoFs

    def _cinv_apply(self, r: np.ndarray) -> np.ndarray:
        return np.einsum("cij,cj->ci", self.cinv, r.reshape(-1, 4)).ravel()

    def solve(self, ell_vals: np.ndarray, factor_cache: dict | None = None,
              method: str = "direct", rtol: float = 1e-12,
              x0: np.ndarray | None = None):
        """Solve for (displacement, pressure) at the given ell(phi) values."""
        rhs_p = (self.ell_scale * np.asarray(ell_vals)[:, None]).ravel()
        load = self.load_u + self.coupling_free.T @ self._cinv_apply(rhs_p)
        if method == "direct":
            if factor_cache is not None and "lu" in factor_cache:
                lu = factor_cache["lu"]
            else:
                lu = spla.splu(self.matrix)
                if factor_cache is not None:
                    factor_cache["lu"] = lu
            x = lu.solve(load)
        elif method == "amg":
            import pyamg
            if factor_cache is not None and "ml" in factor_cache:
                ml = factor_cache["ml"]
            else:
                ml = pyamg.smoothed_aggregation_solver(
                    self.matrix.tocsr(), B=self.near_nullspace,
                    max_coarse=500)
                if factor_cache is not None:
                    factor_cache["ml"] = ml
            x = ml.solve(load, x0=x0, tol=rtol, accel="cg", maxiter=400)
        else:
            raise ValueError(f"unknown solve method {method!r}")
        primal = self.primal_values.copy()
        primal[self.primal_free] = x
        secondary = self._cinv_apply(self.coupling_full @ primal - rhs_p)
        return primal, secondary


def assemble_elasticity_condensed(mesh: PolyMesh, dofmap: DofMap,
                                  elas_ops: list, params,
                                  fbar: np.ndarray,
                                  dirichlet_values: np.ndarray | None = None,
                                  extra_load: np.ndarray | None = None
                                  ) -> CondensedElasticSystem:
    """Assemble the pressure-eliminated displacement system.

    Produces the same solution as ``assemble_elasticity`` followed by a
    direct solve; the concentration-dependent load enters later through
    ``CondensedElasticSystem.solve(ell_vals)``.
    """
    nd, npr = dofmap.n_disp, dofmap.n_pres
    nc = mesh.num_cells
    lam = params.lam
    rows, cols, vals = [], [], []
    rowsB, colsB, valsB = [], [], []
    rhs_u = np.zeros(nd)
    cinv = np.empty((nc, 4, 4))
    ell_scale = np.empty((nc, 4))
    for ci, ops in enumerate(elas_ops):
        g = dofmap.disp_cell_dofs_full(ci, ops.layout).astype(np.int32)
        cinv[ci] = lam * np.linalg.inv(ops.pressure_mass)
        local = ops.stiffness + ops.coupling.T @ cinv[ci] @ ops.coupling
        ii, jj = np.meshgrid(g, g, indexing="ij")
        rows.append(ii.ravel())
        cols.append(jj.ravel())
        vals.append(local.ravel())
        pg = np.arange(4 * ci, 4 * ci + 4, dtype=np.int32)
        ii, jj = np.meshgrid(pg, g, indexing="ij")
        rowsB.append(ii.ravel())
        colsB.append(jj.ravel())
        valsB.append(ops.coupling.ravel())
        rhs_u[g] += ops.int_v.T @ fbar[ci]
        ell_scale[ci] = -(1.0 / lam) * ops.mono_int
    S = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nd, nd)).tocsr()
    del rows, cols, vals
    B = sp.coo_matrix((np.concatenate(valsB),
                       (np.concatenate(rowsB), np.concatenate(colsB))),
                      shape=(npr, nd)).tocsr()
    del rowsB, colsB, valsB
    if extra_load is not None:
        rhs_u = rhs_u + extra_load
    values = np.zeros(nd) if dirichlet_values is None else dirichlet_values
    free = np.nonzero(~dofmap.disp_fixed)[0]
    con = np.nonzero(dofmap.disp_fixed)[0]
    load_u = rhs_u[free] - S[free][:, con] @ values[con]
    Sff = S[free][:, free].tocsc()
    del S
    modes = _rigid_modes(mesh, dofmap)[free]
    return CondensedElasticSystem(Sff, load_u, B[:, free].tocsr(), B, cinv,
                                  ell_scale, free, values, modes)


def assemble_diffusion(mesh: PolyMesh, dofmap: DofMap, flux_ops: list,
                       hdiv_cells: list, params, g_cell_int: np.ndarray,
                       phi_d=None, flux_values: np.ndarray | None = None,
                       quad_order: int = 6) -> BlockSystem:
    """Global system of the flux/concentration pair for the current iterate.

    ``flux_ops`` are the iterate-dependent FluxLocalOperators; ``g_cell_int``
    holds int_P g per cell; ``phi_d(pts)`` is the concentration Dirichlet
    datum entering the natural boundary term.
    """
    nz, nc = dofmap.n_flux, dofmap.n_conc
    tags = mesh.boundary_tags[dofmap.flux_tags]
    rows, cols, vals = [], [], []
    rowsB, colsB, valsB = [], [], []
    rhs_z = np.zeros(nz)
    rhs_c = -np.asarray(g_cell_int, dtype=float)
    vol = mesh.geom.cell_volume
    for ci, ops in enumerate(flux_ops):
        g = dofmap.flux_cell_dofs(ci, ops.layout)
        _accumulate(rows, cols, vals, g, g, ops.weighted_mass)
        _accumulate(rowsB, colsB, valsB, [ci], g,
                    vol[ci] * ops.div_row[None, :])
        if phi_d is not None:
            for fi in ops.layout.faces:
                if tags[fi] == DIRICHLET:
                    rhs_z[g] += hdiv_cells[ci].dirichlet_load(
                        int(fi), phi_d, quad_order)
    A = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nz, nz))
    B = sp.coo_matrix((np.concatenate(valsB),
                       (np.concatenate(rowsB), np.concatenate(colsB))),
                      shape=(nc, nz))
    C = sp.diags(params.theta * vol).tocsr()
    values = np.zeros(nz) if flux_values is None else flux_values
    K, rhs, free = _condense(A, B, C, rhs_z, rhs_c,
                             dofmap.flux_fixed, values, nc)
    return BlockSystem(K, rhs, free, nz, values, nc)


@dataclass
class SolutionState:
    """Full per-field DoF vectors of the coupled problem."""

    u: np.ndarray      # displacement DoFs
    p: np.ndarray      # 4 pressure coefficients per cell
    zeta: np.ndarray   # flux DoFs
    phi: np.ndarray    # one concentration value per cell

    def copy(self):
        return SolutionState(self.u.copy(), self.p.copy(),
                             self.zeta.copy(), self.phi.copy())


def apply_solution(primal: np.ndarray, secondary: np.ndarray,
                   dofmap: DofMap, which: str,
                   state: SolutionState | None = None) -> SolutionState:
    """Scatter a subsystem solve into a SolutionState."""
    if state is None:
        state = SolutionState(np.zeros(dofmap.n_disp), np.zeros(dofmap.n_pres),
                              np.zeros(dofmap.n_flux), np.zeros(dofmap.n_conc))
    if which == "elasticity":
        if len(primal) != dofmap.n_disp or len(secondary) != dofmap.n_pres:
            raise DimensionError("elasticity solution size mismatch")
        state.u = primal
        state.p = secondary
    elif which == "diffusion":
        if len(primal) != dofmap.n_flux or len(secondary) != dofmap.n_conc:
            raise DimensionError("diffusion solution size mismatch")
        state.zeta = primal
        state.phi = secondary
    else:
        raise ValueError(f"unknown subsystem {which!r}")
    return state
