import numpy as np
import pytest

from vemsad import poly
from vemsad.elasticity import (ElasticityCell, FaceScalarSpace, FaceSpaceCache,
                               NPOLY)
from vemsad.mesh import MomentTable, build_structured_mesh

from conftest import single_prism_cell, single_voronoi_cell


def make_cell(mesh, ci=0):
    mt = MomentTable(mesh)
    return ElasticityCell(mesh, mt, ci, FaceSpaceCache(mesh, mt))


@pytest.fixture(scope="module")
def cube_cell(hex2_module):
    return make_cell(hex2_module, 3)


@pytest.fixture(scope="module")
def hex2_module():
    return build_structured_mesh("hex", 2)


@pytest.fixture(scope="module")
def cube_ops(cube_cell):
    return cube_cell.build(mu=1.0)


def test_dof_count(cube_cell):
    # 8 vertices + 12 edges + 6 faces, 3 components each, + 3 divergence DoFs
    assert cube_cell.layout.ndof == 81


@pytest.mark.parametrize("maker", [
    lambda: build_structured_mesh("hex", 2),
    single_prism_cell,
    single_voronoi_cell,
])
def test_projection_reproduces_polynomials(maker):
    ec = make_cell(maker())
    ops = ec.build(mu=1.0)
    np.testing.assert_allclose(ops.pi_eps @ ops.interp, np.eye(NPOLY),
                               atol=1e-11)


def test_stabilisation_vanishes_on_polynomials(cube_ops):
    resid = cube_ops.stab @ cube_ops.interp
    assert np.abs(resid).max() < 1e-11


def test_stabilisation_spd_on_kernel(cube_ops):
    S = cube_ops.stab
    np.testing.assert_allclose(S, S.T, atol=1e-12)
    w = np.linalg.eigvalsh(S)
    ndof = S.shape[0]
    # kernel dimension equals the polynomial range, the rest is positive
    assert np.count_nonzero(w < 1e-10) == NPOLY
    assert w[NPOLY:].min() > 1e-10
    assert w.min() > -1e-12 * abs(w).max()


def test_stiffness_kernel_is_rigid_motions(cube_ops):
    w = np.linalg.eigvalsh(cube_ops.stiffness)
    scale = w.max()
    assert np.count_nonzero(w < 1e-10 * scale) == 6
    assert w.min() > -1e-12 * scale


def test_rigid_motions_have_zero_energy(cube_cell, cube_ops):
    xP = cube_cell.xP
    rbms = [lambda p: np.tile([1.0, 0, 0], (len(p), 1)),
            lambda p: np.tile([0, 1.0, 0], (len(p), 1)),
            lambda p: np.tile([0, 0, 1.0], (len(p), 1)),
            lambda p: np.cross([1.0, 0, 0], p - xP),
            lambda p: np.cross([0, 1.0, 0], p - xP),
            lambda p: np.cross([0, 0, 1.0], p - xP)]
    for rbm in rbms:
        d = cube_cell.interpolate(rbm)
        assert abs(d @ cube_ops.stiffness @ d) < 1e-10 * np.linalg.norm(d) ** 2


def test_consistency_energy_exact_for_quadratic(cube_cell, cube_ops):
    # u = (x^2, xy, z^2): compute 2 mu int eps : eps by quadrature and
    # compare with the consistency form on the interpolated DoFs
    mesh, ci = cube_cell.mesh, cube_cell.ci

    def u(p):
        return np.column_stack([p[:, 0] ** 2, p[:, 0] * p[:, 1], p[:, 2] ** 2])

    def eps(p):
        e = np.zeros((len(p), 3, 3))
        e[:, 0, 0] = 2 * p[:, 0]
        e[:, 0, 1] = e[:, 1, 0] = 0.5 * p[:, 1]
        e[:, 1, 1] = p[:, 0]
        e[:, 1, 2] = e[:, 2, 1] = 0.0
        e[:, 2, 2] = 2 * p[:, 2]
        return e

    pts, wts = mesh.cell_quadrature(ci, 4)
    ev = eps(pts)
    exact = 2.0 * np.sum(wts * np.einsum("pij,pij->p", ev, ev))
    d = cube_cell.interpolate(u)
    assert d @ cube_ops.consistency @ d == pytest.approx(exact, rel=1e-11)


def test_divergence_projection_exact(cube_cell, cube_ops):
    # u = (x^2, y z, z x): div u = 2x + z + x (linear)
    def u(p):
        return np.column_stack([p[:, 0] ** 2, p[:, 1] * p[:, 2],
                                p[:, 2] * p[:, 0]])

    d = cube_cell.interpolate(u)
    coef = cube_ops.div_matrix @ d
    pts = cube_cell.mesh.cell_quadrature(cube_cell.ci, 2)[0]
    vals = cube_cell.mesh.cell_basis(cube_cell.ci, 1).eval(pts) @ coef
    np.testing.assert_allclose(vals, 3 * pts[:, 0] + pts[:, 2], rtol=1e-10)


def test_volume_integral_operator(cube_cell, cube_ops):
    def u(p):
        return np.column_stack([p[:, 0] * p[:, 1], p[:, 2] ** 2,
                                np.ones(len(p))])

    d = cube_cell.interpolate(u)
    pts, wts = cube_cell.mesh.cell_quadrature(cube_cell.ci, 4)
    exact = wts @ u(pts)
    np.testing.assert_allclose(cube_ops.int_v @ d, exact, rtol=1e-10,
                               atol=1e-14)


def test_coupling_row_is_divergence_moment(cube_cell, cube_ops):
    # coupling[b, :] d = -int_P m_b div u for the interpolant of a polynomial
    def u(p):
        return np.column_stack([p[:, 0] ** 2, p[:, 1] ** 2, p[:, 0] * p[:, 2]])

    d = cube_cell.interpolate(u)
    pts, wts = cube_cell.mesh.cell_quadrature(cube_cell.ci, 4)
    div = 2 * pts[:, 0] + 2 * pts[:, 1] + pts[:, 0]
    mono = cube_cell.mesh.cell_basis(cube_cell.ci, 1).eval(pts)
    exact = -np.einsum("p,pa->a", wts * div, mono)
    np.testing.assert_allclose(cube_ops.coupling @ d, exact, rtol=1e-10,
                               atol=1e-14)


def test_mono_int_matches_moments(cube_cell, cube_ops):
    mt = cube_cell.mt
    np.testing.assert_allclose(cube_ops.mono_int,
                               mt.cell_moments(cube_cell.ci, 1), rtol=1e-13)


def test_stab_scale_passthrough(cube_cell):
    base = cube_cell.build(mu=1.0, stab_scale=1.0)
    double = cube_cell.build(mu=1.0, stab_scale=2.0)
    np.testing.assert_allclose(double.stab, 2.0 * base.stab, rtol=1e-12)
    np.testing.assert_allclose(double.consistency, base.consistency,
                               rtol=1e-12)


# --- face scalar space ------------------------------------------------------

def test_face_space_moments_of_quadratic(hex2_module):
    mesh = hex2_module
    mt = MomentTable(mesh)
    fi = int(mesh.boundary_faces[0])
    fs = FaceScalarSpace(mesh, mt, fi)

    def f(p):
        p = np.atleast_2d(p)
        out = p[:, 0] ** 2 + 2 * p[:, 1] * p[:, 2] + p[:, 0] - 1.0
        return out if out.size > 1 else float(out[0])

    dofs = fs.dof_values(lambda p: f(p), mesh)
    got = fs.moments @ dofs
    pts, wts = mesh.face_quadrature(fi, 6)
    lc = mesh.face_local_coords(fi, pts)
    fb = mesh.face_basis(fi, 2).eval(lc)
    exact = fb.T @ (wts * f(pts))
    np.testing.assert_allclose(got, exact, rtol=1e-11, atol=1e-14)


def test_boundary_moment_row(cube_cell):
    # int_f u_0 * 1 over one face equals the area-normalized face DoF * area
    fi = int(cube_cell.layout.faces[0])
    w = np.zeros(1)
    w[0] = 1.0
    row = cube_cell.boundary_moment_row(fi, 0, w)

    def u(p):
        return np.column_stack([p[:, 0] * p[:, 1] + p[:, 2],
                                np.zeros(len(p)), np.zeros(len(p))])

    d = cube_cell.interpolate(u)
    pts, wts = cube_cell.mesh.face_quadrature(fi, 4)
    exact = np.sum(wts * (pts[:, 0] * pts[:, 1] + pts[:, 2]))
    assert row @ d == pytest.approx(exact, rel=1e-11)
