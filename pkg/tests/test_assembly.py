import numpy as np
import pytest

from vemsad.assembly import (DofMap, apply_solution, assemble_diffusion,
                             assemble_elasticity)
from vemsad.errors import ConstraintError, DimensionError
from vemsad.harness import Discretization
from vemsad.materials import MaterialLaw, PhysicalParameters
from vemsad.mesh import build_structured_mesh, classify_boundary
from vemsad.solver import make_minv_field


def plain_params():
    return PhysicalParameters(mu=1.0, lam=10.0, theta=1.0, M=1.0)


def plain_law():
    return MaterialLaw(
        eval_minv=lambda s, p, x: np.tile(np.eye(3), (len(x), 1, 1)),
        eval_ell=lambda phi: np.zeros_like(np.asarray(phi, dtype=float)),
        params=plain_params())


@pytest.fixture(scope="module")
def disc():
    mesh = build_structured_mesh("hex", 2)
    classify_boundary(mesh, lambda c: "N" if c[0] > 0.99 else "D")
    return Discretization.build(mesh, mu=1.0)


def test_dof_counts(disc):
    dm = disc.dofmap
    # 27 vertices, 54 edges, 36 faces, 8 cells
    assert dm.n_disp == 3 * (27 + 54 + 36 + 8)
    assert dm.n_pres == 32
    assert dm.n_flux == 3 * 36 + 3 * 8
    assert dm.n_conc == 8


def test_dirichlet_dofs_marked(disc):
    dm = disc.dofmap
    mesh = disc.mesh
    tags = mesh.boundary_tags["default"]
    nD = np.count_nonzero(tags == 1)
    assert np.count_nonzero(dm.disp_fixed[dm._off_face:dm._off_div]) == 3 * nD
    # the center vertex is interior: its DoFs stay free
    center = int(np.argmin(np.linalg.norm(mesh.vertices - 0.5, axis=1)))
    assert not dm.disp_fixed[3 * center:3 * center + 3].any()
    # divergence DoFs are never constrained
    assert not dm.disp_fixed[dm._off_div:].any()


def test_flux_neumann_dofs_marked(disc):
    dm = disc.dofmap
    tags = disc.mesh.boundary_tags["default"]
    nN = np.count_nonzero(tags == 2)
    assert nN == 4
    assert np.count_nonzero(dm.flux_fixed) == 3 * nN
    assert not dm.flux_fixed[3 * disc.mesh.num_faces:].any()


def test_constraint_errors():
    mesh = build_structured_mesh("hex", 1)
    mesh.boundary_tags["noD"] = np.zeros(mesh.num_faces, dtype=np.int64)
    mesh.boundary_tags["ok"] = np.where(
        np.arange(mesh.num_faces) == 0, 1, 0).astype(np.int64)
    with pytest.raises(ConstraintError):
        DofMap(mesh, disp_tags="noD", flux_tags="ok")
    with pytest.raises(ConstraintError):
        DofMap(mesh, disp_tags="ok", flux_tags="noD")


def test_global_dof_maps_are_consistent(disc):
    dm = disc.dofmap
    seen = set()
    for ci in range(disc.mesh.num_cells):
        g = dm.disp_cell_dofs_full(ci, disc.eops[ci].layout)
        assert len(np.unique(g)) == len(g)
        seen.update(int(i) for i in g)
    assert seen == set(range(dm.n_disp))
    seen = set()
    for ci in range(disc.mesh.num_cells):
        g = dm.flux_cell_dofs(ci, disc.hcells[ci].layout)
        assert len(np.unique(g)) == len(g)
        seen.update(int(i) for i in g)
    assert seen == set(range(dm.n_flux))


def test_elasticity_system_symmetric(disc):
    law = plain_law()
    dm = disc.dofmap
    sys = assemble_elasticity(
        disc.mesh, dm, disc.eops, law.params, law,
        np.zeros(dm.n_conc), np.zeros((disc.mesh.num_cells, 3)))
    d = sys.matrix - sys.matrix.T
    assert abs(d).max() < 1e-10 * abs(sys.matrix).max()


def test_diffusion_system_symmetric(disc):
    law = plain_law()
    dm = disc.dofmap
    from vemsad.solver import CoupledProblem
    state0 = apply_solution(np.zeros(dm.n_disp), np.zeros(dm.n_pres),
                            dm, "elasticity")
    problem = CoupledProblem(disc.mesh, dm, disc.eops, disc.hcells, law,
                             np.zeros((disc.mesh.num_cells, 3)),
                             np.zeros(disc.mesh.num_cells))
    flux_ops = [c.build(make_minv_field(problem, state0, ci))
                for ci, c in enumerate(disc.hcells)]
    sys = assemble_diffusion(disc.mesh, dm, flux_ops, disc.hcells,
                             law.params, np.zeros(disc.mesh.num_cells))
    d = sys.matrix - sys.matrix.T
    assert abs(d).max() < 1e-10 * abs(sys.matrix).max()


def test_block_solve_matches_dense(disc):
    law = plain_law()
    dm = disc.dofmap
    rng = np.random.default_rng(0)
    fbar = rng.standard_normal((disc.mesh.num_cells, 3))
    vals = np.zeros(dm.n_disp)
    vals[dm.disp_fixed] = rng.standard_normal(np.count_nonzero(dm.disp_fixed))
    sys = assemble_elasticity(disc.mesh, dm, disc.eops, law.params, law,
                              np.zeros(dm.n_conc), fbar,
                              dirichlet_values=vals)
    u, p = sys.solve()
    x = np.linalg.solve(sys.matrix.toarray(), sys.rhs)
    np.testing.assert_allclose(u[sys.primal_free], x[:len(sys.primal_free)],
                               rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(u[dm.disp_fixed], vals[dm.disp_fixed])
    np.testing.assert_allclose(p, x[len(sys.primal_free):], rtol=1e-9,
                               atol=1e-12)


def test_elasticity_reproduces_quadratic_displacement(disc):
    # u in (P2)^3, phi = 0, linear ell: the discrete solution interpolates
    # the exact one (all consistency terms are exact, stabilisation vanishes)
    law = plain_law()
    prm = law.params
    dm = disc.dofmap

    def u_ex(p):
        return np.column_stack([p[:, 0] ** 2 + p[:, 1],
                                p[:, 0] * p[:, 1],
                                p[:, 2] ** 2 - p[:, 0]])

    # div u = 3x + 2z; p = -lam div u; f = -div(2 mu eps(u)) + grad p
    # with div eps(u) = (2.5, 0, 2)
    def f(p):
        out = np.tile(-2.0 * prm.mu * np.array([2.5, 0.0, 2.0]), (len(p), 1))
        out[:, 0] += -prm.lam * 3.0
        out[:, 2] += -prm.lam * 2.0
        return out

    disp_values = disc.interpolate_displacement(u_ex)
    fbar = disc.cell_means(f)
    # traction on the Neumann part: sigma n with sigma = 2 mu eps - p I
    tags = disc.mesh.boundary_tags["default"]
    nfaces = np.nonzero(tags == 2)[0]

    def stress(p):
        g = np.zeros((len(p), 3, 3))
        g[:, 0, 0] = 2 * p[:, 0]
        g[:, 0, 1] = 1.0
        g[:, 1, 0] = p[:, 1]
        g[:, 1, 1] = p[:, 0]
        g[:, 2, 2] = 2 * p[:, 2]
        g[:, 2, 0] = -1.0
        eps = 0.5 * (g + np.transpose(g, (0, 2, 1)))
        pr = -prm.lam * (3 * p[:, 0] + 2 * p[:, 2])
        return 2 * prm.mu * eps - pr[:, None, None] * np.eye(3)

    extra = disc.traction_load(lambda p, n: stress(p) @ n, nfaces)
    sys = assemble_elasticity(disc.mesh, dm, disc.eops, prm, law,
                              np.zeros(dm.n_conc), fbar,
                              dirichlet_values=disp_values, extra_load=extra)
    u, p = sys.solve()
    np.testing.assert_allclose(u, disp_values, atol=1e-9)
    # pressure coefficients must reproduce -lam div u on each cell
    for ci in range(disc.mesh.num_cells):
        pts = disc.mesh.cell_quadrature(ci, 2)[0]
        vals = disc.mesh.cell_basis(ci, 1).eval(pts) @ p[4 * ci:4 * ci + 4]
        expect = -prm.lam * (3 * pts[:, 0] + 2 * pts[:, 2])
        np.testing.assert_allclose(vals, expect, rtol=1e-8)


def test_apply_solution_checks_sizes(disc):
    dm = disc.dofmap
    with pytest.raises(DimensionError):
        apply_solution(np.zeros(3), np.zeros(dm.n_pres), dm, "elasticity")
    with pytest.raises(ValueError):
        apply_solution(np.zeros(dm.n_disp), np.zeros(dm.n_pres), dm, "nope")
