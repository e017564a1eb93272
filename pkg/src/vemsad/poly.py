"""Scaled monomial bases, exact polynomial calculus, and quadrature rules.

Monomials on a cell are ((x - x_P)/h_P)^alpha in graded lexicographic order;
face bases live in a 2D orthonormal frame centered at the face barycenter and
scaled by the face diameter.  All differentiation is done on coefficient
vectors, so it is exact up to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


# ---------------------------------------------------------------------------
# multi-indices and dimensions

def monomial_dim(k: int, dim: int = 3) -> int:
    """Number of monomials of total degree <= k in `dim` variables."""
    if k < 0:
        return 0
    if dim == 3:
        return (k + 1) * (k + 2) * (k + 3) // 6
    if dim == 2:
        return (k + 1) * (k + 2) // 2
    raise ValueError(f"unsupported dimension {dim}")


@lru_cache(maxsize=None)
def multi_indices(k: int, dim: int = 3) -> np.ndarray:
    """Exponent table (n, dim) in graded lex order (degree, then lex desc)."""
    rows = []
    if dim == 3:
        for d in range(k + 1):
            degree_rows = [(a, b, d - a - b)
                           for a in range(d, -1, -1)
                           for b in range(d - a, -1, -1)]
            rows.extend(degree_rows)
    else:
        for d in range(k + 1):
            rows.extend([(a, d - a) for a in range(d, -1, -1)])
    out = np.array(rows, dtype=np.int64).reshape(-1, dim)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _index_lookup(k: int, dim: int = 3):
    exps = multi_indices(k, dim)
    return {tuple(e): i for i, e in enumerate(exps)}


# ---------------------------------------------------------------------------
# evaluation

def eval_monomials(exps: np.ndarray, center: np.ndarray, scale: float,
                   pts: np.ndarray) -> np.ndarray:
    """Evaluate scaled monomials at `pts`; returns (npts, nmono)."""
    pts = np.atleast_2d(pts)
    xh = (pts - center) / scale
    # (npts, nmono): product over coordinates of xh[:, d] ** exps[:, d]
    out = np.ones((pts.shape[0], exps.shape[0]))
    for d in range(exps.shape[1]):
        out *= xh[:, d:d + 1] ** exps[None, :, d]
    return out


@dataclass(frozen=True)
class MonomialBasis:
    """Scaled monomial basis on a cell (dim 3) or face frame (dim 2)."""

    center: np.ndarray
    scale: float
    degree: int
    dim: int = 3

    @property
    def exponents(self) -> np.ndarray:
        return multi_indices(self.degree, self.dim)

    def __len__(self) -> int:
        return monomial_dim(self.degree, self.dim)

    def eval(self, pts: np.ndarray) -> np.ndarray:
        return eval_monomials(self.exponents, self.center, self.scale, pts)


# ---------------------------------------------------------------------------
# coefficient-level calculus

@lru_cache(maxsize=None)
def _derivative_maps(k: int, dim: int = 3):
    """Unscaled derivative matrices D_d: coeffs of degree k -> degree k-1.

    The 1/h chain-rule factor is applied by the callers once per derivative.
    """
    exps = multi_indices(k, dim)
    lookup = _index_lookup(max(k - 1, 0), dim)
    nlo = monomial_dim(k - 1, dim)
    mats = []
    for d in range(dim):
        D = np.zeros((nlo, len(exps)))
        for i, e in enumerate(exps):
            if e[d] > 0:
                lo = list(e)
                lo[d] -= 1
                D[lookup[tuple(lo)], i] = e[d]
        mats.append(D)
    return mats


def grad_coeffs(c: np.ndarray, k: int, h: float, dim: int = 3) -> np.ndarray:
    """Gradient of a scalar polynomial: (nlo, dim) coefficient array."""
    mats = _derivative_maps(k, dim)
    return np.stack([mats[d] @ c for d in range(dim)], axis=1) / h


def div_coeffs(c: np.ndarray, k: int, h: float, dim: int = 3) -> np.ndarray:
    """Divergence of a vector polynomial with coefficients (n, dim)."""
    mats = _derivative_maps(k, dim)
    return sum(mats[d] @ c[:, d] for d in range(dim)) / h


def curl_coeffs(c: np.ndarray, k: int, h: float) -> np.ndarray:
    """Curl of a 3D vector polynomial; coefficients (n, 3) -> (nlo, 3)."""
    D = _derivative_maps(k, 3)
    return np.stack([
        D[1] @ c[:, 2] - D[2] @ c[:, 1],
        D[2] @ c[:, 0] - D[0] @ c[:, 2],
        D[0] @ c[:, 1] - D[1] @ c[:, 0],
    ], axis=1) / h


def sym_grad_coeffs(c: np.ndarray, k: int, h: float) -> np.ndarray:
    """Symmetric gradient of a vector polynomial: (nlo, 3, 3) coefficients."""
    D = _derivative_maps(k, 3)
    nlo = monomial_dim(k - 1, 3)
    eps = np.zeros((nlo, 3, 3))
    for i in range(3):
        for j in range(3):
            eps[:, i, j] = 0.5 * (D[i] @ c[:, j] + D[j] @ c[:, i]) / h
    return eps


def div_sym_grad_coeffs(c: np.ndarray, k: int, h: float) -> np.ndarray:
    """div(eps(v)) of a vector polynomial: (n_{k-2}, 3) coefficients."""
    eps = sym_grad_coeffs(c, k, h)
    D = _derivative_maps(k - 1, 3)
    n2 = monomial_dim(k - 2, 3)
    out = np.zeros((n2, 3))
    for j in range(3):
        out[:, j] = sum(D[i] @ eps[:, i, j] for i in range(3)) / h
    return out


# ---------------------------------------------------------------------------
# vector polynomial space decompositions

def grad_basis(k: int) -> np.ndarray:
    """Basis of grad(M_{k+1}) \\ {0} as (n_grad, dim_k, 3) coefficient array.

    Spans the gradient part of (P_k)^3; 1/h factors are omitted (they only
    rescale basis vectors and do not change spans).
    """
    exps = multi_indices(k + 1, 3)
    out = []
    for i in range(1, exps.shape[0]):  # skip the constant monomial
        c = np.zeros(exps.shape[0])
        c[i] = 1.0
        out.append(grad_coeffs(c, k + 1, 1.0))
    return np.array(out)


def wedge_basis(k: int) -> np.ndarray:
    """Basis of x_hat ^ (M_{k-1})^3 as (n, dim_k, 3) coefficients.

    x_hat = (x - x_P)/h_P corresponds to the linear monomials; the wedge with
    a degree k-1 monomial times a unit vector gives a degree k vector field.
    """
    if k < 1:
        return np.zeros((0, monomial_dim(k, 3), 3))
    dim_k = monomial_dim(k, 3)
    lookup = _index_lookup(k, 3)
    lo = multi_indices(k - 1, 3)
    ident = np.eye(3, dtype=np.int64)
    out = []
    for e in lo:
        for j in range(3):
            # x_hat ^ (m e_j) has components eps_{ijl} x_hat_i m delta_{lj}
            c = np.zeros((dim_k, 3))
            for i in range(3):
                comp = np.cross(ident[i], ident[j])  # e_i ^ e_j
                if not comp.any():
                    continue
                idx = lookup[tuple(e + ident[i])]
                c[idx] += comp
            out.append(c)
    return np.array(out, dtype=float)


def curl_basis(k: int) -> np.ndarray:
    """Spanning set of curl((M_{k+1})^3) inside (P_k)^3; may be redundant."""
    exps = multi_indices(k + 1, 3)
    out = []
    for i in range(exps.shape[0]):
        for j in range(3):
            c = np.zeros((exps.shape[0], 3))
            c[i, j] = 1.0
            cc = curl_coeffs(c, k + 1, 1.0)
            if np.any(cc):
                out.append(cc)
    return np.array(out)


def radial_basis(k: int) -> np.ndarray:
    """Basis of x_hat * M_{k-1} as (n, dim_k, 3) coefficients."""
    if k < 1:
        return np.zeros((0, monomial_dim(k, 3), 3))
    dim_k = monomial_dim(k, 3)
    lookup = _index_lookup(k, 3)
    ident = np.eye(3, dtype=np.int64)
    out = []
    for e in multi_indices(k - 1, 3):
        c = np.zeros((dim_k, 3))
        for i in range(3):
            c[lookup[tuple(e + ident[i])], i] = 1.0
        out.append(c)
    return np.array(out)


# ---------------------------------------------------------------------------
# quadrature rules (reference simplices, collapsed conical products)

def _gl01(n: int):
    x, w = roots_legendre(n)
    return (x + 1.0) / 2.0, w / 2.0


def _gj01(n: int, alpha: int):
    # weight (1-x)^alpha on [0,1]
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def triangle_rule(degree: int):
    """Quadrature on the reference triangle {x,y>=0, x+y<=1}, exact to `degree`."""
    n = max(degree, 0) // 2 + 1
    u, wu = _gl01(n)
    v, wv = _gj01(n, 1)
    pts = np.empty((n * n, 2))
    wts = np.empty(n * n)
    idx = 0
    for j in range(n):
        for i in range(n):
            pts[idx] = (v[j], u[i] * (1.0 - v[j]))
            wts[idx] = wu[i] * wv[j]
            idx += 1
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


@lru_cache(maxsize=None)
def tetrahedron_rule(degree: int):
    """Quadrature on the reference tetrahedron, exact to `degree`."""
    n = max(degree, 0) // 2 + 1
    u, wu = _gl01(n)
    v, wv = _gj01(n, 1)
    s, ws = _gj01(n, 2)
    pts = np.empty((n ** 3, 3))
    wts = np.empty(n ** 3)
    idx = 0
    for a in range(n):
        for b in range(n):
            for c in range(n):
                x = s[a]
                y = v[b] * (1.0 - x)
                z = u[c] * (1.0 - x - y)
                pts[idx] = (x, y, z)
                wts[idx] = ws[a] * wv[b] * wu[c]
                idx += 1
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def map_triangle(a, b, c, degree: int):
    """Rule on a (possibly 3D-embedded) triangle with vertices a, b, c."""
    ref, w = triangle_rule(degree)
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    pts = a + np.outer(ref[:, 0], b - a) + np.outer(ref[:, 1], c - a)
    if a.shape[0] == 3:
        scale = np.linalg.norm(np.cross(b - a, c - a))
    else:
        scale = abs(np.cross(b - a, c - a))
    return pts, w * scale


def map_tetrahedron(a, b, c, d, degree: int):
    """Rule on the tetrahedron (a, b, c, d); weights carry the signed volume."""
    ref, w = tetrahedron_rule(degree)
    a, b, c, d = (np.asarray(v, dtype=float) for v in (a, b, c, d))
    B = np.column_stack([b - a, c - a, d - a])
    pts = a + ref @ B.T
    return pts, w * np.linalg.det(B)


def tet_volume(a, b, c, d) -> float:
    a, b, c, d = (np.asarray(v, dtype=float) for v in (a, b, c, d))
    return float(np.linalg.det(np.column_stack([b - a, c - a, d - a])) / 6.0)
