import numpy as np
import pytest

from vemsad.materials import (MaterialLaw, PhysicalParameters, example1_law,
                              example2_law, get_law, law_diagnostics,
                              register_law)


def test_parameter_validation():
    with pytest.raises(ValueError):
        PhysicalParameters(mu=-1.0, lam=1.0, theta=1.0, M=1.0)
    with pytest.raises(ValueError):
        PhysicalParameters(mu=1.0, lam=1.0, theta=1.0, M=0.0)
    PhysicalParameters(mu=1.0, lam=1.0, theta=0.0, M=1.0)   # theta = 0 allowed


def test_example1_parameters():
    law = example1_law()
    assert law.params.mu == 1e2
    assert law.params.lam == 1e3
    assert law.params.theta == 1e-3
    assert law.params.M == 2e1


def test_example1_mobility_at_zero_state():
    law = example1_law()
    zero = np.zeros((1, 3, 3))
    minv = law.eval_minv(zero, np.zeros(1), np.zeros((1, 3)))
    # m(0) = 1e-3 so the inverse mobility is 1e3 I
    np.testing.assert_allclose(minv[0], 1e3 * np.eye(3), rtol=1e-13)


def test_example1_mobility_stress_dependence():
    law = example1_law()
    strain = np.zeros((1, 3, 3))
    strain[0] = 0.01 * np.eye(3)
    p = np.array([0.5])
    minv = law.eval_minv(strain, p, np.zeros((1, 3)))
    # tr(2 mu eps - p I) = 2*100*0.03 - 3*0.5 = 4.5
    expect = 1.0 / (1e-3 * np.exp(-1e-4 * 4.5))
    np.testing.assert_allclose(minv[0], expect * np.eye(3), rtol=1e-13)


def test_example1_active_stress():
    law = example1_law()
    assert law.eval_ell(0.0) == pytest.approx(1.0)
    assert law.eval_ell(1.0) == pytest.approx(1.5)
    # saturates below 2
    assert float(law.eval_ell(1e6)) < 2.0


def test_example2_lame_and_k0():
    law = example2_law()
    assert law.params.mu == pytest.approx(1e-2 / 2.6, rel=1e-12)
    assert law.params.lam == pytest.approx(1e-2 * 0.3 / (1.3 * 0.4), rel=1e-12)
    k0 = float(law.eval_ell(1.0))
    assert k0 == pytest.approx(29141666666.666664, rel=1e-12)


def test_example2_mobility_quadratic_in_stress():
    law = example2_law()
    mu = law.params.mu
    strain = np.zeros((1, 3, 3))
    strain[0, 0, 0] = 0.2
    p = np.array([0.05])
    stress = 2 * mu * strain[0] - p[0] * np.eye(3)
    mob = 1e2 * (np.eye(3) + 1e5 * stress @ stress)
    minv = law.eval_minv(strain, p, np.zeros((1, 3)))
    np.testing.assert_allclose(minv[0], np.linalg.inv(mob), rtol=1e-12)


def test_trace_convention_flag():
    m = example1_law("matrix")
    s = example1_law("scalar")
    strain = 0.01 * np.eye(3)[None]
    p = np.array([0.5])
    a = m.eval_minv(strain, p, np.zeros((1, 3)))[0, 0, 0]
    b = s.eval_minv(strain, p, np.zeros((1, 3)))[0, 0, 0]
    assert a != b
    # same when the stress trace happens to vanish under both readings
    z = np.zeros((1, 3, 3))
    a = m.eval_minv(z, np.zeros(1), np.zeros((1, 3)))[0, 0, 0]
    b = s.eval_minv(z, np.zeros(1), np.zeros((1, 3)))[0, 0, 0]
    assert a == pytest.approx(b, rel=1e-14)


def test_eval_mob_is_inverse():
    law = example1_law()
    strain = 0.03 * np.eye(3)[None]
    p = np.array([0.2])
    pts = np.zeros((1, 3))
    prod = law.eval_mob(strain, p, pts)[0] @ law.eval_minv(strain, p, pts)[0]
    np.testing.assert_allclose(prod, np.eye(3), rtol=1e-12, atol=1e-14)


def test_registry():
    assert get_law("example1").label == "example1"
    assert get_law("example2").label == "example2"
    with pytest.raises(KeyError):
        get_law("nope")
    marker = example1_law()
    register_law("alias1", lambda: marker)
    assert get_law("alias1") is marker


def test_law_diagnostics_spd():
    law = example1_law()
    rng = np.random.default_rng(1)
    samples = [(0.01 * rng.standard_normal((3, 3)), float(rng.normal()))
               for _ in range(10)]
    samples = [(0.5 * (s + s.T), p) for s, p in samples]
    diag = law_diagnostics(law, samples)
    assert diag.spd_ok
    assert diag.symmetry_residual < 1e-12
    assert diag.eigenvalue_range[0] > 0
    assert diag.lipschitz_ell > 0


def test_law_diagnostics_flags_indefinite():
    bad = MaterialLaw(
        eval_minv=lambda s, p, x: -np.eye(3)[None],
        eval_ell=lambda phi: phi,
        params=PhysicalParameters(1.0, 1.0, 1.0, 1.0))
    diag = law_diagnostics(bad, [(np.zeros((3, 3)), 0.0)])
    assert not diag.spd_ok
