"""Manufactured-solution cases, weighted error norms, convergence studies,
and the lithiation demo driver.

Derived data (pressure, flux, body load, diffusive source) come from the
closed-form displacement and concentration by numerical differentiation:
complex-step for first derivatives (machine precision for entire functions)
and Richardson-extrapolated central differences for the divergence level.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import poly
from .assembly import DofMap, SolutionState
from .elasticity import ElasticityCell, FaceSpaceCache
from .errors import RateAnomalyWarning
from .hdiv import HdivCell
from .materials import MaterialLaw, get_law
from .mesh import (DIRICHLET, MomentTable, PolyMesh, build_structured_mesh,
                   classify_boundary)
from .solver import CoupledProblem, FixedPointConfig, solve_coupled

CSTEP = 1e-30


def _cstep_grad_scalar(func, pts):
    """(n, 3) gradient of a scalar field entire in each coordinate."""
    out = np.empty((len(pts), 3))
    for j in range(3):
        z = pts.astype(complex)
        z[:, j] += 1j * CSTEP
        out[:, j] = np.imag(func(z)) / CSTEP
    return out


def _cstep_grad_vector(func, pts):
    """(n, 3, 3) Jacobian du_i/dx_j of a vector field."""
    out = np.empty((len(pts), 3, 3))
    for j in range(3):
        z = pts.astype(complex)
        z[:, j] += 1j * CSTEP
        out[:, :, j] = np.imag(func(z)) / CSTEP
    return out


def _richardson_div_vector(func, pts, h):
    """Richardson-extrapolated central-difference divergence of (n,3) field."""

    def central(hh):
        acc = np.zeros(len(pts))
        for j in range(3):
            e = np.zeros(3)
            e[j] = hh
            acc += (func(pts + e)[:, j] - func(pts - e)[:, j]) / (2 * hh)
        return acc

    d1, d2 = central(h), central(0.5 * h)
    return (4.0 * d2 - d1) / 3.0


def _richardson_div_tensor(func, pts, h):
    """Row divergence (sum_j d sigma_ij / dx_j) of an (n,3,3) field."""

    def central(hh):
        acc = np.zeros((len(pts), 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = hh
            acc += (func(pts + e)[:, :, j] - func(pts - e)[:, :, j]) / (2 * hh)
        return acc

    d1, d2 = central(h), central(0.5 * h)
    return (4.0 * d2 - d1) / 3.0


@dataclass
class ManufacturedCase:
    """Closed-form (u, phi) plus a material law; everything else derived."""

    name: str
    law: MaterialLaw
    u: object                 # u(pts complex-safe) -> (n, 3)
    phi: object               # phi(pts complex-safe) -> (n,)
    fd_step: float = 5e-3

    @property
    def params(self):
        return self.law.params

    def strain(self, pts):
        J = _cstep_grad_vector(self.u, pts)
        return 0.5 * (J + np.transpose(J, (0, 2, 1)))

    def div_u(self, pts):
        return np.trace(_cstep_grad_vector(self.u, pts), axis1=1, axis2=2)

    def p(self, pts):
        return -self.params.lam * self.div_u(pts) \
            + self.law.eval_ell(self.phi(pts))

    def grad_phi(self, pts):
        return _cstep_grad_scalar(self.phi, pts)

    def zeta(self, pts):
        mob = self.law.eval_mob(self.strain(pts), self.p(pts), pts)
        return np.einsum("nij,nj->ni", mob, self.grad_phi(pts))

    def stress(self, pts):
        eps = self.strain(pts)
        return 2.0 * self.params.mu * eps \
            - self.p(pts)[:, None, None] * np.eye(3)

    def f(self, pts):
        return -_richardson_div_tensor(self.stress, pts, self.fd_step)

    def div_zeta(self, pts):
        return _richardson_div_vector(self.zeta, pts, self.fd_step)

    def g(self, pts):
        return self.params.theta * self.phi(pts) - self.div_zeta(pts)

    def residual_check(self, n: int = 100, seed: int = 0,
                       margin: float = 0.1) -> float:
        """Max relative defect of the derived data at random interior points.

        The pressure and flux relations hold by construction; the two
        divergence-level data are cross-checked against an independent
        difference scheme (different step), so the returned number bounds the
        numerical-differentiation error of f and g.
        """
        rng = np.random.default_rng(seed)
        pts = margin + (1 - 2 * margin) * rng.random((n, 3))
        alt = self.fd_step / 1.7
        f_alt = -_richardson_div_tensor(self.stress, pts, alt)
        g_alt = self.params.theta * self.phi(pts) \
            - _richardson_div_vector(self.zeta, pts, alt)
        fv, gv = self.f(pts), self.g(pts)
        rf = np.abs(fv - f_alt).max() / max(np.abs(fv).max(), 1.0)
        rg = np.abs(gv - g_alt).max() / max(np.abs(gv).max(), 1.0)
        return float(max(rf, rg))


def example1_case(trace_convention: str = "matrix") -> ManufacturedCase:
    """Unit-cube convergence study with trigonometric exact fields."""

    def u(pts):
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        return np.stack([
            x ** 2 + x * np.cos(x) * np.sin(y),
            y ** 2 + x * np.cos(y) * np.sin(x),
            z ** 2 + x * np.cos(x) * np.cos(y),
        ], axis=-1) / 5.0

    def phi(pts):
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        return np.cos(np.pi * y) + np.sin(np.pi * x) + x**2 + y**2 + z**2

    return ManufacturedCase("example1", get_law(
        "example1", trace_convention=trace_convention), u, phi)


def example1_boundary(face_centroid, tol: float = 1e-9) -> str:
    """Natural-data boundary on the three far faces, essential elsewhere."""
    if np.any(np.abs(face_centroid - 1.0) < tol):
        return "N"
    return "D"


# ---------------------------------------------------------------------------
# discretization bundle and data interpolation

@dataclass
class Discretization:
    mesh: PolyMesh
    mt: MomentTable
    dofmap: DofMap
    ecells: list
    eops: list
    hcells: list

    @classmethod
    def build(cls, mesh: PolyMesh, mu: float, stab_scale: float = 1.0,
              disp_tags: str = "default", flux_tags: str = "default"):
        mt = MomentTable(mesh)
        dm = DofMap(mesh, disp_tags=disp_tags, flux_tags=flux_tags)
        fsc = FaceSpaceCache(mesh, mt)
        ecells = [ElasticityCell(mesh, mt, ci, fsc)
                  for ci in range(mesh.num_cells)]
        eops = [c.build(mu, stab_scale=stab_scale) for c in ecells]
        hcells = [HdivCell(mesh, mt, ci) for ci in range(mesh.num_cells)]
        return cls(mesh, mt, dm, ecells, eops, hcells)

    def interpolate_displacement(self, func) -> np.ndarray:
        out = np.zeros(self.dofmap.n_disp)
        for ci, c in enumerate(self.ecells):
            out[self.dofmap.disp_cell_dofs_full(ci, self.eops[ci].layout)] = \
                c.interpolate(func)
        return out

    def interpolate_flux(self, func) -> np.ndarray:
        out = np.zeros(self.dofmap.n_flux)
        for ci, c in enumerate(self.hcells):
            out[self.dofmap.flux_cell_dofs(ci, c.layout)] = \
                c.fortin_interpolate(func)
        return out

    def flux_face_values(self, func, faces) -> np.ndarray:
        """Face-moment DoF values of an analytic flux on selected faces."""
        mesh = self.mesh
        out = np.zeros(self.dofmap.n_flux)
        for fi in faces:
            owner = mesh.face_cells[fi, 0]
            hc = self.hcells[owner]
            n = hc.global_normal(int(fi))
            area = mesh.geom.face_area[fi]
            pts, wts = mesh.face_quadrature(int(fi), 6)
            lc = mesh.face_local_coords(int(fi), pts)
            fb = mesh.face_basis(int(fi), 1).eval(lc)
            vn = func(pts) @ n
            for m in range(3):
                out[3 * fi + m] = np.sum(wts * vn * fb[:, m]) / area
        return out

    def traction_load(self, traction, faces, degree: int = 2) -> np.ndarray:
        """Assembled surface load rows for a traction t(pts, n) -> (n, 3)."""
        mesh = self.mesh
        out = np.zeros(self.dofmap.n_disp)
        for fi in faces:
            owner = int(mesh.face_cells[fi, 0])
            ec = self.ecells[owner]
            g = self.dofmap.disp_cell_dofs_full(owner, self.eops[owner].layout)
            n = mesh.geom.face_normal[fi] * ec._fsign[int(fi)]
            for j in range(3):
                cf = ec._face_poly_coeffs(
                    int(fi), lambda p, j=j: traction(p, n)[:, j], degree)
                out[g] += ec.boundary_moment_row(int(fi), j, cf)
        return out

    def quad_batches(self, quad_order: int, chunk_cells: int = 512):
        """Concatenated cell quadrature in chunks: (cells, pts, wts, offsets).

        Expensive exact-field evaluators (complex-step plus Richardson) cost
        dozens of numpy calls per invocation, so they are applied to large
        point batches instead of per cell.
        """
        mesh = self.mesh
        for lo in range(0, mesh.num_cells, chunk_cells):
            cells = range(lo, min(lo + chunk_cells, mesh.num_cells))
            pw = [mesh.cell_quadrature(ci, quad_order) for ci in cells]
            offsets = np.cumsum([0] + [len(w) for _, w in pw])
            yield (cells, np.concatenate([p for p, _ in pw]),
                   np.concatenate([w for _, w in pw]), offsets)

    def cell_means(self, func, quad_order: int = 4) -> np.ndarray:
        mesh = self.mesh
        vals0 = np.asarray(func(mesh.geom.cell_centroid[:1]))
        out = np.zeros((mesh.num_cells,) + vals0.shape[1:])
        for cells, pts, wts, off in self.quad_batches(quad_order):
            vals = np.asarray(func(pts))
            for k, ci in enumerate(cells):
                sl = slice(off[k], off[k + 1])
                out[ci] = wts[sl] @ vals[sl] / mesh.geom.cell_volume[ci]
        return out

    def cell_integrals(self, func, quad_order: int = 4) -> np.ndarray:
        out = np.zeros(self.mesh.num_cells)
        for cells, pts, wts, off in self.quad_batches(quad_order):
            vals = np.asarray(func(pts))
            for k, ci in enumerate(cells):
                sl = slice(off[k], off[k + 1])
                out[ci] = wts[sl] @ vals[sl]
        return out

    def strain_evaluator(self, state: SolutionState, ci: int):
        """(eps(Pi u_h), p_h) point evaluator on cell ci."""
        ops = self.eops[ci]
        g = self.dofmap.disp_cell_dofs_full(ci, ops.layout)
        coef = ops.pi_eps @ state.u[g]
        pcoef = state.p[4 * ci:4 * ci + 4]
        basis2 = self.mesh.cell_basis(ci, 2)
        basis1 = self.mesh.cell_basis(ci, 1)
        dmaps = poly._derivative_maps(2)
        hP = basis2.scale

        def ev(pts):
            mono = basis2.eval(pts)
            grad = np.empty((len(pts), 3, 3))
            for i in range(3):
                cc = coef[i::3]
                for j in range(3):
                    dc = (dmaps[j] @ cc) / hP
                    grad[:, i, j] = mono[:, :len(dc)] @ dc
            eps = 0.5 * (grad + np.transpose(grad, (0, 2, 1)))
            return eps, basis1.eval(pts) @ pcoef

        return ev

    def flux_evaluator(self, state: SolutionState, ci: int):
        """(Pi0 zeta_h, div zeta_h) point evaluator on cell ci."""
        hc = self.hcells[ci]
        g = self.dofmap.flux_cell_dofs(ci, hc.layout)
        coef = hc.pi0 @ state.zeta[g]
        div_val = float(hc.div_row @ state.zeta[g])
        basis1 = self.mesh.cell_basis(ci, 1)

        def ev(pts):
            mono = basis1.eval(pts)
            vals = np.stack([mono @ coef[j::3] for j in range(3)], axis=-1)
            return vals, div_val

        return ev


# ---------------------------------------------------------------------------
# weighted error norms

@dataclass
class LevelRecord:
    h: float
    n_cells: int
    err_u: float
    err_p: float
    err_zeta: float
    err_phi: float
    err_total: float
    iterations: int


@dataclass
class ErrorReport:
    records: list = field(default_factory=list)

    @property
    def rates(self) -> list:
        out = []
        for a, b in zip(self.records, self.records[1:]):
            out.append(np.log(a.err_total / b.err_total) / np.log(a.h / b.h))
        return out

    @property
    def component_rates(self) -> dict:
        out = {}
        for key in ("err_u", "err_p", "err_zeta", "err_phi"):
            vals = []
            for a, b in zip(self.records, self.records[1:]):
                vals.append(np.log(getattr(a, key) / getattr(b, key))
                            / np.log(a.h / b.h))
            out[key] = vals
        return out

    @property
    def ls_rate(self) -> float:
        """Least-squares slope of log(total error) vs log(h)."""
        if len(self.records) < 2:
            return float("nan")
        lh = np.log([r.h for r in self.records])
        le = np.log([r.err_total for r in self.records])
        return float(np.polyfit(lh, le, 1)[0])

    def table(self) -> str:
        lines = ["    h      cells   e_u        e_p        e_zeta     "
                 "e_phi      e_total    rate  iters"]
        rates = [float("nan")] + self.rates
        for r, rate in zip(self.records, rates):
            lines.append(
                f"{r.h:8.5f} {r.n_cells:6d} {r.err_u:.4e} {r.err_p:.4e} "
                f"{r.err_zeta:.4e} {r.err_phi:.4e} {r.err_total:.4e} "
                f"{rate:5.2f} {r.iterations:4d}")
        lines.append(f"least-squares total rate: {self.ls_rate:.3f}")
        return "\n".join(lines)

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.txt").write_text(self.table() + "\n")
        with open(out / "table.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "n_cells", "err_u", "err_p", "err_zeta",
                        "err_phi", "err_total", "iterations"])
            for r in self.records:
                w.writerow([r.h, r.n_cells, r.err_u, r.err_p, r.err_zeta,
                            r.err_phi, r.err_total, r.iterations])
        with open(out / "plot.dat", "w") as fh:
            fh.write("# h  err_total\n")
            for r in self.records:
                fh.write(f"{r.h:.8e} {r.err_total:.8e}\n")


def compute_errors(case: ManufacturedCase, disc: Discretization,
                   state: SolutionState, iterations: int = 0,
                   quad_order: int = 4) -> LevelRecord:
    """Weighted-norm errors against the projected discrete fields."""
    mesh = disc.mesh
    prm = case.params
    wu = 2.0 * prm.mu
    wp = 1.0 / (2.0 * prm.mu) + 1.0 / prm.lam
    wphi = 1.0 / prm.M + prm.theta
    e_u2 = e_p2 = e_z2 = e_phi2 = 0.0
    for cells, bpts, bwts, off in disc.quad_batches(quad_order):
        eps_ex = case.strain(bpts)
        p_ex = case.p(bpts)
        z_ex = case.zeta(bpts)
        divz_ex = case.div_zeta(bpts)
        phi_ex = np.real(case.phi(bpts.astype(complex)))
        minv = case.law.eval_minv(eps_ex, p_ex, bpts)
        for k, ci in enumerate(cells):
            sl = slice(off[k], off[k + 1])
            pts, wts = bpts[sl], bwts[sl]
            eps_h, p_h = disc.strain_evaluator(state, ci)(pts)
            e_u2 += wu * np.sum(
                wts * np.sum((eps_ex[sl] - eps_h) ** 2, axis=(1, 2)))
            e_p2 += wp * np.sum(wts * (p_ex[sl] - p_h) ** 2)
            z_h, divz_h = disc.flux_evaluator(state, ci)(pts)
            dz = z_ex[sl] - z_h
            e_z2 += np.sum(wts * np.einsum("nij,ni,nj->n", minv[sl], dz, dz))
            e_z2 += prm.M * np.sum(wts * (divz_ex[sl] - divz_h) ** 2)
            e_phi2 += wphi * np.sum(wts * (phi_ex[sl] - state.phi[ci]) ** 2)
    e_u, e_p = np.sqrt(e_u2), np.sqrt(e_p2)
    e_z, e_phi = np.sqrt(e_z2), np.sqrt(e_phi2)
    total = float(np.sqrt(e_u2 + e_p2 + e_z2 + e_phi2))
    return LevelRecord(float(mesh.geom.cell_h.max()), mesh.num_cells,
                       float(e_u), float(e_p), float(e_z), float(e_phi),
                       total, iterations)


# ---------------------------------------------------------------------------
# convergence driver

def setup_case_problem(case: ManufacturedCase, disc: Discretization,
                       data_quad: int = 2) -> CoupledProblem:
    """Boundary data, loads, and sources for a manufactured case."""
    mesh = disc.mesh
    tags = mesh.boundary_tags[disc.dofmap.flux_tags]
    neumann_faces = np.nonzero(tags == 2)[0]

    def u_real(pts):
        return np.real(case.u(pts.astype(complex)))

    def phi_real(pts):
        return np.real(case.phi(pts.astype(complex)))

    disp_values = disc.interpolate_displacement(u_real)
    flux_values = disc.flux_face_values(case.zeta, neumann_faces)
    fbar = disc.cell_means(case.f, data_quad)
    g_int = disc.cell_integrals(case.g, data_quad)
    extra = disc.traction_load(
        lambda pts, n: case.stress(pts) @ n, neumann_faces) \
        if len(neumann_faces) else None
    return CoupledProblem(
        mesh, disc.dofmap, disc.eops, disc.hcells, case.law, fbar, g_int,
        disp_values=disp_values, flux_values=flux_values, phi_d=phi_real,
        extra_load=extra)


def run_convergence(case: ManufacturedCase, mesh_family: str = "hex",
                    levels: int = 4, config: FixedPointConfig | None = None,
                    out_dir=None, stab_scale: float = 1.0,
                    quad_order: int = 4, boundary=example1_boundary,
                    verbose: bool = False) -> ErrorReport:
    """Solve the case on a uniform refinement sequence and tabulate rates."""
    config = config or FixedPointConfig()
    report = ErrorReport()
    ns = [2 ** (l + 1) for l in range(levels)]
    for n in ns:
        mesh = build_structured_mesh(mesh_family, n)
        classify_boundary(mesh, boundary)
        disc = Discretization.build(mesh, case.params.mu,
                                    stab_scale=stab_scale)
        problem = setup_case_problem(case, disc)
        state, trace = solve_coupled(problem, config, case.params)
        rec = compute_errors(case, disc, state, trace.iterations, quad_order)
        report.records.append(rec)
        if verbose:
            print(f"n={n:3d} h={rec.h:.4f} e={rec.err_total:.4e} "
                  f"iters={rec.iterations}", flush=True)
    if report.rates and report.rates[-1] < 0.5:
        warnings.warn(
            f"final observed rate {report.rates[-1]:.2f} < 0.5",
            RateAnomalyWarning)
    if out_dir is not None:
        report.write(out_dir)
    return report


# ---------------------------------------------------------------------------
# lithiation demo

def lithiation_tags(mesh: PolyMesh, clamped: bool) -> None:
    """Per-field boundary tag sets for the perforated-particle geometry.

    Elasticity: inner surface clamped (plus top/bottom when ``clamped``),
    outer surface and the remaining bases carry the traction.  Diffusion:
    concentration fixed on the outer surface, zero normal flux elsewhere.
    """
    bc = mesh.geom.face_centroid[mesh.boundary_faces]
    r = np.hypot(bc[:, 0], bc[:, 1])
    rmid = 0.5 * (r.min() + r.max())
    zmin, zmax = mesh.vertices[:, 2].min(), mesh.vertices[:, 2].max()
    ztol = 1e-6 * (zmax - zmin)

    def side(c):
        if c[2] < zmin + ztol or c[2] > zmax - ztol:
            return "base"
        return "inner" if np.hypot(c[0], c[1]) < rmid else "outer"

    def disp_pred(c):
        s = side(c)
        if s == "inner":
            return "D"
        if s == "base":
            return "D" if clamped else "N"
        return "N"

    def flux_pred(c):
        return "D" if side(c) == "outer" else "N"

    classify_boundary(mesh, disp_pred, name="disp")
    classify_boundary(mesh, flux_pred, name="flux")


def run_lithiation(mesh: PolyMesh, clamped: bool,
                   config: FixedPointConfig | None = None,
                   traction_magnitude: float = -2e-4,
                   phi_outer: float = 2.29e-14, out_dir=None,
                   stab_scale: float = 1.0):
    """Lithiation of the perforated particle; returns (state, trace, disc)."""
    config = config or FixedPointConfig()
    law = get_law("example2")
    prm = law.params
    lithiation_tags(mesh, clamped)
    disc = Discretization.build(mesh, prm.mu, stab_scale=stab_scale,
                                disp_tags="disp", flux_tags="flux")
    mesh_tags = mesh.boundary_tags["disp"]
    traction_faces = np.nonzero(mesh_tags == 2)[0]
    extra = disc.traction_load(
        lambda pts, n: traction_magnitude * np.broadcast_to(n, (len(pts), 3)),
        traction_faces, degree=0)
    problem = CoupledProblem(
        mesh, disc.dofmap, disc.eops, disc.hcells, law,
        fbar=np.zeros((mesh.num_cells, 3)),
        g_cell_int=np.zeros(mesh.num_cells),
        phi_d=lambda pts: np.full(len(pts), phi_outer),
        extra_load=extra)
    state, trace = solve_coupled(problem, config, prm)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        export_vtk(state, disc, out / "fields.vtu")
    return state, trace, disc


# ---------------------------------------------------------------------------
# VTK export

def export_vtk(state: SolutionState, disc: Discretization, path) -> None:
    """Polyhedral VTU with displacement point data and cell fields."""
    from .meshfile import save_vtu
    mesh = disc.mesh
    nv = mesh.num_vertices
    point_u = state.u[:3 * nv].reshape(nv, 3)
    nc = mesh.num_cells
    pres = np.empty(nc)
    divz = np.empty(nc)
    zbar = np.empty((nc, 3))
    for ci in range(nc):
        pres[ci] = state.p[4 * ci]   # centered basis: value at the barycenter
        ev = disc.flux_evaluator(state, ci)
        vals, divz[ci] = ev(mesh.geom.cell_centroid[ci][None])
        zbar[ci] = vals[0]
    save_vtu(mesh, path,
             point_data={"displacement": point_u},
             cell_data={"pressure": pres, "concentration": state.phi,
                        "flux": zbar, "flux_divergence": divz,
                        "flux_magnitude": np.linalg.norm(zbar, axis=1)})
