"""Fixed-point driver for the coupled displacement/pressure/flux/concentration
problem.

Each sweep solves elasticity with the concentration frozen, then rebuilds the
mobility from the new stress state and solves the diffusion pair.  The
elasticity matrix does not depend on the iterate, so its factorization is
reused across sweeps; only its right side changes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import (DofMap, SolutionState, apply_solution,
                       assemble_diffusion, assemble_elasticity,
                       assemble_elasticity_condensed)
from .errors import NonConvergenceError


@dataclass
class FixedPointConfig:
    tol: float = 1e-5
    abs_floor: float = 1e-12     # floor of the relative increment denominator
    max_iter: int = 50
    norm: str = "phi"            # "phi" or "combined" increment measure
    damping: float = 1.0
    quad_order: int = 4
    # "auto" keeps the sparse direct solve of the indefinite pair on small
    # meshes and switches to the pressure-eliminated SPD system with
    # multigrid-preconditioned CG above ``condense_threshold`` displacement
    # DoFs, where the direct factorization no longer fits in memory.
    # "saddle", "condensed-direct", "condensed-amg" force a path.
    elasticity_solver: str = "auto"
    condense_threshold: int = 60000
    amg_rtol: float = 1e-12
    # the flux/concentration saddle system: sparse direct below the
    # threshold, block-preconditioned MINRES above (the LU fill of the
    # H(div) saddle grows too fast on fine meshes)
    diffusion_solver: str = "auto"   # "auto" | "direct" | "minres"
    minres_rtol: float = 1e-10


@dataclass
class IterationTrace:
    increments: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    elasticity_assemblies: int = 0
    diffusion_assemblies: int = 0
    wall_time: float = 0.0

    def contraction_estimate(self) -> float:
        """Geometric decay ratio of the last increments (nan if too short)."""
        inc = [e for e in self.increments if e > 0]
        if len(inc) < 2:
            return float("nan")
        return float(np.exp(np.mean(np.diff(np.log(inc[-4:])))))


@dataclass
class CoupledProblem:
    """Everything the fixed-point sweep needs, independent of the iterate.

    ``fbar``: (n_cells, 3) cell averages of the elastic body load.
    ``g_cell_int``: per-cell integrals of the reaction-diffusion source.
    ``disp_values``: full-length displacement vector holding the essential
    data on constrained DoFs.  ``flux_values``: likewise for the flux normal
    trace.  ``phi_d(pts)``: concentration Dirichlet datum.  ``extra_load``:
    assembled traction contributions, or None.
    """

    mesh: object
    dofmap: DofMap
    elas_ops: list
    hdiv_cells: list
    law: object
    fbar: np.ndarray
    g_cell_int: np.ndarray
    disp_values: np.ndarray | None = None
    flux_values: np.ndarray | None = None
    phi_d: object = None
    extra_load: np.ndarray | None = None


def _strain_pressure_field(problem, state, ci):
    """Pointwise eps(Pi u_h) and P1 pressure on cell ci for the mobility."""
    ops = problem.elas_ops[ci]
    mesh = problem.mesh
    g = problem.dofmap.disp_cell_dofs_full(ci, ops.layout)
    coef = ops.pi_eps @ state.u[g]          # 30 vector-monomial coefficients
    pcoef = state.p[4 * ci:4 * ci + 4]
    basis2 = mesh.cell_basis(ci, 2)
    basis1 = mesh.cell_basis(ci, 1)
    hP = basis2.scale
    from . import poly
    dmaps = poly._derivative_maps(2)

    def field(pts):
        mono = basis2.eval(pts)
        grad = np.empty((len(pts), 3, 3))   # du_i/dx_j
        for i in range(3):
            ci_coef = coef[i::3]
            for j in range(3):
                dcoef = (dmaps[j] @ ci_coef) / hP
                grad[:, i, j] = mono[:, :len(dcoef)] @ dcoef
        eps = 0.5 * (grad + np.transpose(grad, (0, 2, 1)))
        pres = basis1.eval(pts) @ pcoef
        return eps, pres

    return field


def make_minv_field(problem, state, ci):
    """Inverse-mobility coefficient on cell ci for the current iterate."""
    sp_field = _strain_pressure_field(problem, state, ci)
    law = problem.law

    def minv(pts):
        eps, pres = sp_field(pts)
        return law.eval_minv(eps, pres, pts)

    return minv


def _increment_norm(new: SolutionState, old: SolutionState, mesh,
                    mode: str) -> tuple[float, float]:
    vol = mesh.geom.cell_volume
    dphi = float(np.sqrt(np.sum(vol * (new.phi - old.phi) ** 2)))
    ref = float(np.sqrt(np.sum(vol * new.phi ** 2)))
    if mode == "phi":
        return dphi, ref
    if mode == "combined":
        du = float(np.linalg.norm(new.u - old.u))
        dz = float(np.linalg.norm(new.zeta - old.zeta))
        ru = float(np.linalg.norm(new.u))
        rz = float(np.linalg.norm(new.zeta))
        return np.hypot(dphi, np.hypot(du, dz)), np.hypot(ref, np.hypot(ru, rz))
    raise ValueError(f"unknown increment norm {mode!r}")


def solve_coupled(problem: CoupledProblem, config: FixedPointConfig,
                  params, state0: SolutionState | None = None
                  ) -> tuple[SolutionState, IterationTrace]:
    """Run the fixed-point sweep to the configured tolerance.

    Raises NonConvergenceError (carrying the increment trace) if the
    tolerance is not met within ``max_iter`` sweeps.
    """
    t0 = time.perf_counter()
    mesh, dm = problem.mesh, problem.dofmap
    trace = IterationTrace()
    state = state0.copy() if state0 is not None else SolutionState(
        np.zeros(dm.n_disp), np.zeros(dm.n_pres),
        np.zeros(dm.n_flux), np.zeros(dm.n_conc))

    mode = config.elasticity_solver
    if mode == "auto":
        mode = ("condensed-amg" if dm.n_disp > config.condense_threshold
                else "saddle")
    if mode not in ("saddle", "condensed-direct", "condensed-amg"):
        raise ValueError(f"unknown elasticity solver {mode!r}")
    dmode = config.diffusion_solver
    if dmode not in ("auto", "direct", "minres"):
        raise ValueError(f"unknown diffusion solver {dmode!r}")

    elas_cache: dict = {}
    elas_sys = None
    for it in range(config.max_iter):
        prev = state.copy()

        if elas_sys is None:
            if mode == "saddle":
                elas_sys = assemble_elasticity(
                    mesh, dm, problem.elas_ops, params, problem.law,
                    state.phi, problem.fbar,
                    dirichlet_values=problem.disp_values,
                    extra_load=problem.extra_load)
                nfree = len(elas_sys.primal_free)
                elas_sys._rhs_p_base = elas_sys.rhs[nfree:] - \
                    _ell_part(problem, params, state.phi)
            else:
                elas_sys = assemble_elasticity_condensed(
                    mesh, dm, problem.elas_ops, params, problem.fbar,
                    dirichlet_values=problem.disp_values,
                    extra_load=problem.extra_load)
            trace.elasticity_assemblies += 1
        elif mode == "saddle":
            # only the ell(phi) right side moves between sweeps
            elas_sys.rhs = _elasticity_rhs(problem, params, state.phi,
                                           elas_sys)
        if mode == "saddle":
            u, p = elas_sys.solve(factor_cache=elas_cache)
        else:
            u, p = elas_sys.solve(
                problem.law.eval_ell(state.phi), factor_cache=elas_cache,
                method="direct" if mode == "condensed-direct" else "amg",
                rtol=config.amg_rtol,
                x0=prev.u[elas_sys.primal_free] if it > 0 else None)
        apply_solution(u, p, dm, "elasticity", state)

        flux_ops = [cell.build(make_minv_field(problem, state, ci),
                               quad_order=config.quad_order)
                    for ci, cell in enumerate(problem.hdiv_cells)]
        diff_sys = assemble_diffusion(
            mesh, dm, flux_ops, problem.hdiv_cells, params,
            problem.g_cell_int, phi_d=problem.phi_d,
            flux_values=problem.flux_values)
        trace.diffusion_assemblies += 1
        if dmode == "minres" or (dmode == "auto" and
                                 diff_sys.matrix.shape[0] > 60000):
            z, phi = _solve_diffusion_minres(diff_sys, config.minres_rtol)
        else:
            z, phi = diff_sys.solve()
        if config.damping != 1.0 and it > 0:
            w = config.damping
            z = w * z + (1 - w) * prev.zeta
            phi = w * phi + (1 - w) * prev.phi
        apply_solution(z, phi, dm, "diffusion", state)

        inc, ref = _increment_norm(state, prev, mesh, config.norm)
        trace.increments.append(inc)
        trace.iterations = it + 1
        if inc <= config.tol * max(ref, config.abs_floor):
            trace.converged = True
            break
    trace.wall_time = time.perf_counter() - t0
    if not trace.converged:
        raise NonConvergenceError(
            f"fixed point not converged in {config.max_iter} sweeps "
            f"(last increment {trace.increments[-1]:.3e})", trace=trace)
    return state, trace


def _solve_diffusion_minres(diff_sys, rtol):
    """Iterative solve of the flux/concentration saddle pair.

    Block-diagonal preconditioner: inverse diagonal of the weighted flux
    mass block, and a sparse factorization of the (small, cell-based)
    approximate concentration Schur complement C + B diag(A)^-1 B^T.
    """
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    K = diff_sys.matrix.tocsr()
    nfree = len(diff_sys.primal_free)
    d = K.diagonal()
    dA = d[:nfree]
    dC = -d[nfree:]
    B = K[nfree:, :nfree]
    S = sp.diags(dC) + (B @ sp.diags(1.0 / dA) @ B.T)
    slu = spla.splu(S.tocsc())

    def prec(r):
        out = np.empty_like(r)
        out[:nfree] = r[:nfree] / dA
        out[nfree:] = slu.solve(r[nfree:])
        return out

    M = spla.LinearOperator(K.shape, matvec=prec)
    x, info = spla.minres(K, diff_sys.rhs, M=M, rtol=rtol, maxiter=2000)
    if info != 0:
        raise NonConvergenceError(
            f"diffusion MINRES did not reach rtol {rtol:g} "
            f"(info {info})")
    primal = diff_sys.primal_values.copy()
    primal[diff_sys.primal_free] = x[:nfree]
    return primal, x[nfree:]


def _elasticity_rhs(problem, params, phi_cell, elas_sys):
    """Recompute the elasticity right side for a new concentration iterate.

    The matrix and the lifted Dirichlet part stay fixed; only the
    -lambda^{-1} ell(phi) pressure load changes, so rebuild just that block.
    """
    rhs = elas_sys.rhs.copy()
    nfree = len(elas_sys.primal_free)
    rhs[nfree:] = elas_sys._rhs_p_base + _ell_part(problem, params, phi_cell)
    return rhs


def _ell_part(problem, params, phi_cell):
    lam_inv = 1.0 / params.lam
    ell_vals = problem.law.eval_ell(phi_cell)
    out = np.zeros(problem.dofmap.n_pres)
    for ci, ops in enumerate(problem.elas_ops):
        out[4 * ci:4 * ci + 4] = -lam_inv * ell_vals[ci] * ops.mono_int
    return out


def check_contraction_diagnostics(trace: IterationTrace,
                                  warn_threshold: float = 0.95) -> dict:
    """Summarize the observed contraction behaviour of a finished solve."""
    rho = trace.contraction_estimate()
    return {
        "iterations": trace.iterations,
        "converged": trace.converged,
        "contraction_estimate": rho,
        "contractive": bool(rho < warn_threshold) if np.isfinite(rho) else None,
        "wall_time": trace.wall_time,
    }
