import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vemsad import poly


def ref_triangle_integral(a, b):
    # int_T x^a y^b over {x,y >= 0, x+y <= 1}
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def ref_tet_integral(a, b, c):
    return (math.factorial(a) * math.factorial(b) * math.factorial(c)
            / math.factorial(a + b + c + 3))


def test_monomial_dim():
    assert poly.monomial_dim(0) == 1
    assert poly.monomial_dim(1) == 4
    assert poly.monomial_dim(2) == 10
    assert poly.monomial_dim(1, dim=2) == 3
    assert poly.monomial_dim(2, dim=2) == 6
    assert poly.monomial_dim(-1) == 0


def test_multi_indices_graded():
    exps = poly.multi_indices(3)
    assert exps.shape == (20, 3)
    degs = exps.sum(axis=1)
    assert np.all(np.diff(degs) >= 0)       # graded
    assert len({tuple(e) for e in exps}) == 20


def test_eval_monomials_at_center():
    basis = poly.MonomialBasis(np.array([1.0, 2.0, 3.0]), 2.0, 2)
    vals = basis.eval(np.array([[1.0, 2.0, 3.0]]))
    expected = np.zeros(10)
    expected[0] = 1.0
    np.testing.assert_allclose(vals[0], expected)


@pytest.mark.parametrize("degree", range(7))
def test_triangle_rule_exact(degree):
    pts, wts = poly.triangle_rule(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            val = np.sum(wts * pts[:, 0] ** a * pts[:, 1] ** b)
            assert val == pytest.approx(ref_triangle_integral(a, b), rel=1e-13)


@pytest.mark.parametrize("degree", range(7))
def test_tetrahedron_rule_exact(degree):
    pts, wts = poly.tetrahedron_rule(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                val = np.sum(wts * pts[:, 0] ** a * pts[:, 1] ** b
                             * pts[:, 2] ** c)
                assert val == pytest.approx(ref_tet_integral(a, b, c),
                                            rel=1e-13)


def test_map_triangle_area():
    a, b, c = np.array([0.0, 0, 0]), np.array([2.0, 0, 0]), np.array([0, 3.0, 0])
    _, wts = poly.map_triangle(a, b, c, 2)
    assert np.sum(wts) == pytest.approx(3.0, rel=1e-14)


def test_map_tetrahedron_volume():
    a = np.zeros(3)
    b, c, d = np.eye(3)
    _, wts = poly.map_tetrahedron(a, b, c, d, 2)
    assert np.sum(wts) == pytest.approx(1 / 6, rel=1e-14)
    assert poly.tet_volume(a, b, c, d) == pytest.approx(1 / 6, rel=1e-14)


# --- coefficient calculus vs complex-step derivatives -----------------------

def _poly_eval(c, k, h, pts):
    exps = poly.multi_indices(k)
    return poly.eval_monomials(exps, np.zeros(3), h, pts) @ c


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_grad_coeffs_matches_complex_step(seed):
    rng = np.random.default_rng(seed)
    k, h = 2, 1.7
    c = rng.standard_normal(poly.monomial_dim(k))
    gc = poly.grad_coeffs(c, k, h)
    pt = rng.uniform(-1, 1, 3)
    for d in range(3):
        zp = pt.astype(complex)
        zp[d] += 1e-30j
        exps = poly.multi_indices(k)
        num = np.imag(np.prod(((zp / h) ** exps), axis=1) @ c) / 1e-30
        ana = _poly_eval(gc[:, d], k - 1, h, pt[None])[0]
        assert num == pytest.approx(ana, rel=1e-12, abs=1e-12)


def test_div_of_linear_field():
    # v = (x, 2y, 3z) scaled: coefficients in M_1, h = 2
    h = 2.0
    c = np.zeros((4, 3))
    c[1, 0] = 1.0   # m_1 = x/h -> component x
    c[2, 1] = 2.0
    c[3, 2] = 3.0
    dc = poly.div_coeffs(c, 1, h)
    np.testing.assert_allclose(dc, [6.0 / h])


def test_curl_of_gradient_is_zero():
    rng = np.random.default_rng(0)
    c = rng.standard_normal(poly.monomial_dim(3))
    g = poly.grad_coeffs(c, 3, 1.3)
    np.testing.assert_allclose(poly.curl_coeffs(g, 2, 1.3), 0.0, atol=1e-13)


def test_sym_grad_of_rotation_is_zero():
    # v = omega ^ x is a rigid rotation: eps(v) = 0
    c = np.zeros((4, 3))
    c[2, 0], c[1, 1] = -1.0, 1.0   # v = (-y, x, 0)
    eps = poly.sym_grad_coeffs(c, 1, 1.0)
    np.testing.assert_allclose(eps, 0.0, atol=1e-14)


def test_div_sym_grad_of_quadratic():
    # v = (x^2, 0, 0), h = 1: eps_11 = 2x, div eps = (2, 0, 0)
    lookup = poly._index_lookup(2)
    c = np.zeros((10, 3))
    c[lookup[(2, 0, 0)], 0] = 1.0
    out = poly.div_sym_grad_coeffs(c, 2, 1.0)
    np.testing.assert_allclose(out[0], [2.0, 0.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(out[1:], 0.0, atol=1e-14)


def test_vector_poly_decomposition_rank():
    # grad(M_2) + wedge span all of (P_1)^3: 9 + 3 independent fields
    g = poly.grad_basis(1).reshape(-1, 12)
    w = poly.wedge_basis(1).reshape(-1, 12)
    assert np.linalg.matrix_rank(np.vstack([g, w])) == 12
    # the two parts are independent of each other
    assert np.linalg.matrix_rank(g) == 9
    assert np.linalg.matrix_rank(w) == 3


def test_wedge_fields_are_divergence_free():
    for w in poly.wedge_basis(1):
        np.testing.assert_allclose(poly.div_coeffs(w, 1, 1.0), 0.0, atol=1e-14)


def test_radial_basis_divergence():
    # x_hat * 1 has div = 3 / h
    r = poly.radial_basis(1)
    assert r.shape == (1, 4, 3)
    np.testing.assert_allclose(poly.div_coeffs(r[0], 1, 2.0), [1.5], atol=1e-14)
