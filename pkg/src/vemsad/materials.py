"""Material laws: the stress-dependent mobility and the active stress term.

A law evaluates the inverse mobility M^{-1}(eps(u), p) pointwise (SPD 3x3)
and the active stress coefficient ell(phi).  The two built-in laws match the
manufactured convergence study and the lithiation demo; custom laws can be
registered by name.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class PhysicalParameters:
    mu: float
    lam: float
    theta: float
    M: float
    lipschitz_mobility: float | None = None
    lipschitz_ell: float | None = None

    def __post_init__(self):
        if self.mu <= 0 or self.lam <= 0 or self.M <= 0 or self.theta < 0:
            raise ValueError("need mu > 0, lambda > 0, M > 0, theta >= 0")


@dataclass
class MaterialLaw:
    """eval_minv(strain (n,3,3), pressure (n,), pts (n,3)) -> (n,3,3) SPD."""

    eval_minv: Callable
    eval_ell: Callable
    params: PhysicalParameters
    label: str = "custom"

    def eval_mob(self, strain, pressure, pts):
        return np.linalg.inv(self.eval_minv(strain, pressure, pts))


def _stress_trace(strain, pressure, mu, convention):
    """tr of the Cauchy stress 2 mu eps - p I (or its scalar-cast variant)."""
    tr_eps = np.trace(strain, axis1=-2, axis2=-1)
    if convention == "matrix":
        return 2.0 * mu * tr_eps - 3.0 * pressure
    if convention == "scalar":
        # reading (2 mu eps - p) as the scalar 2 mu tr(eps) - p times I
        return 3.0 * (2.0 * mu * tr_eps - pressure)
    raise ValueError(f"unknown trace convention {convention!r}")


def example1_law(trace_convention: str = "matrix") -> MaterialLaw:
    """Exponential isotropic mobility and saturating active stress."""
    params = PhysicalParameters(mu=1e2, lam=1e3, theta=1e-3, M=2e1)
    mu = params.mu

    def eval_minv(strain, pressure, pts):
        strain = np.asarray(strain, dtype=float)
        pressure = np.asarray(pressure, dtype=float)
        t = _stress_trace(strain, pressure, mu, trace_convention)
        m = 1e-3 * np.exp(-1e-4 * t)
        return (1.0 / m)[..., None, None] * np.eye(3)

    def eval_ell(phi):
        phi = np.asarray(phi, dtype=float)
        return 1.0 + phi ** 2 / (1.0 + phi ** 2)

    return MaterialLaw(eval_minv, eval_ell, params, label="example1")


def example2_law(trace_convention: str = "matrix") -> MaterialLaw:
    """Quadratic stress enhancement of the mobility and linear active stress.

    Lame parameters derived from E = 1e-2 N/um^2 and nu = 0.3; units are the
    raw um / N / mol / s magnitudes, no conversion layer.
    """
    E, nu = 1e-2, 0.3
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    params = PhysicalParameters(mu=mu, lam=lam, theta=1.0, M=1.0)
    m0, m1 = 1e2, 1e3
    omega_tilde = 3.497e12                      # partial molar volume, um^3/mol
    k0 = omega_tilde * (2.0 * mu + 3.0 * lam) / 3.0

    def eval_minv(strain, pressure, pts):
        strain = np.asarray(strain, dtype=float)
        pressure = np.asarray(pressure, dtype=float)
        if trace_convention == "matrix":
            stress = 2.0 * mu * strain - pressure[..., None, None] * np.eye(3)
        else:
            t = _stress_trace(strain, pressure, mu, "scalar") / 3.0
            stress = t[..., None, None] * np.eye(3)
        mob = m0 * (np.eye(3) + m0 * m1 * stress @ stress)
        return np.linalg.inv(mob)

    def eval_ell(phi):
        return k0 * np.asarray(phi, dtype=float)

    return MaterialLaw(eval_minv, eval_ell, params, label="example2")


_REGISTRY = {"example1": example1_law, "example2": example2_law}


def register_law(name: str, factory) -> None:
    _REGISTRY[name] = factory


def get_law(name: str, **kwargs) -> MaterialLaw:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown material law {name!r}; "
                       f"known: {sorted(_REGISTRY)}") from None
    return factory(**kwargs)


@dataclass
class LawDiagnostics:
    spd_ok: bool
    symmetry_residual: float
    eigenvalue_range: tuple
    lipschitz_mobility: float
    lipschitz_ell: float


def law_diagnostics(law: MaterialLaw, samples) -> LawDiagnostics:
    """Empirical SPD/boundedness/Lipschitz report; informational only.

    ``samples`` is a list of (strain, pressure) pairs; Lipschitz constants are
    estimated from finite differences between consecutive samples.
    """
    if not samples:
        raise ValueError("need at least one sample")
    pts = np.zeros((1, 3))
    eig_lo, eig_hi = np.inf, -np.inf
    sym_res = 0.0
    vals = []
    for strain, pressure in samples:
        A = law.eval_minv(np.asarray(strain)[None], np.atleast_1d(pressure), pts)[0]
        sym_res = max(sym_res, float(np.abs(A - A.T).max() / max(np.abs(A).max(), 1e-300)))
        w = np.linalg.eigvalsh(0.5 * (A + A.T))
        eig_lo, eig_hi = min(eig_lo, w.min()), max(eig_hi, w.max())
        vals.append(A)
    lip_m = 0.0
    for (s0, p0), (s1, p1), A0, A1 in zip(samples, samples[1:], vals, vals[1:]):
        dist = np.linalg.norm(np.asarray(s1) - np.asarray(s0)) + abs(p1 - p0)
        if dist > 0:
            lip_m = max(lip_m, float(np.linalg.norm(A1 - A0) / dist))
    phis = np.linspace(-2.0, 2.0, 41)
    ell = np.asarray([float(law.eval_ell(p)) for p in phis])
    lip_e = float(np.abs(np.diff(ell) / np.diff(phis)).max())
    return LawDiagnostics(
        spd_ok=bool(eig_lo > 0.0), symmetry_residual=sym_res,
        eigenvalue_range=(float(eig_lo), float(eig_hi)),
        lipschitz_mobility=lip_m, lipschitz_ell=lip_e)
