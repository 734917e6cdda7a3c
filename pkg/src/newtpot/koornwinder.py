"""Orthonormal polynomial basis on the reference simplex.

The basis is the classical warped tensor-product (Jacobi) construction on
collapsed coordinates, orthonormalized with respect to the area measure on

    T = {(x, y) : x >= 0, y >= 0, x + y <= 1}.

It is used for three things: selecting well-conditioned interpolation nodes
(via QR pivoting on the basis Vandermonde), moment-fitting quadrature
weights, and as an independent fitting oracle when judging the quality of
monomial expansions.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import eval_jacobi


def basis_size(order: int) -> int:
    """Number of polynomials of total degree <= order in two variables."""
    return (order + 1) * (order + 2) // 2


def degree_pairs(order: int) -> list[tuple[int, int]]:
    """Canonical (j, k) index pairs, total degree ascending, k within."""
    return [(m - n, n) for m in range(order + 1) for n in range(m + 1)]


def _raw_basis(x: np.ndarray, y: np.ndarray, order: int) -> np.ndarray:
    """Unnormalized basis values, shape (npts, basis_size(order)).

    Collapsed coordinates a = 2x/(1-y) - 1, b = 2y - 1; the y = 1 apex is
    handled by the analytic limit (the (1-b)/2 factor vanishes there for
    j > 0, so the value of `a` is immaterial).
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    denom = 1.0 - y
    safe = np.where(np.abs(denom) < 1e-300, 1.0, denom)
    a = np.where(np.abs(denom) < 1e-300, -1.0, 2.0 * x / safe - 1.0)
    b = 2.0 * y - 1.0
    half1mb = 0.5 * (1.0 - b)

    cols = []
    for j, k in degree_pairs(order):
        pj = eval_jacobi(j, 0.0, 0.0, a)
        pk = eval_jacobi(k, 2.0 * j + 1.0, 0.0, b)
        cols.append(pj * half1mb**j * pk)
    return np.column_stack(cols)


@lru_cache(maxsize=64)
def _normalization(order: int) -> np.ndarray:
    """L2(T) norms of the raw basis columns, computed by exact quadrature."""
    n = 2 * order + 4
    u, wu = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (u + 1.0)
    wu = 0.5 * wu
    # Duffy map (u, v) -> (u(1-v), v); Jacobian (1-v) makes the rule exact
    # for polynomials on the simplex.
    uu, vv = np.meshgrid(u, u, indexing="ij")
    ww = np.outer(wu, wu) * (1.0 - vv)
    x = (uu * (1.0 - vv)).ravel()
    y = vv.ravel()
    w = ww.ravel()
    v = _raw_basis(x, y, order)
    norms = np.sqrt((w[:, None] * v * v).sum(axis=0))
    return norms


def koornwinder_basis(x: np.ndarray, y: np.ndarray, order: int) -> np.ndarray:
    """Orthonormal basis values at (x, y), shape (npts, basis_size(order))."""
    return _raw_basis(x, y, order) / _normalization(order)


def koornwinder_fit(values: np.ndarray, x: np.ndarray, y: np.ndarray,
                    order: int) -> np.ndarray:
    """Least-squares expansion coefficients of sampled values.

    The basis is orthonormal, so with a dense well-spread sample the normal
    equations are well conditioned; plain lstsq is adequate.
    """
    v = koornwinder_basis(x, y, order)
    coef, *_ = np.linalg.lstsq(v, np.asarray(values, dtype=float), rcond=None)
    return coef


def simplex_quadrature(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Duffy-mapped tensor Gauss rule on T: returns (x, y, w), sum(w) = 1/2.

    Exact for bivariate polynomials of total degree <= 2n - 2 (the extra
    (1-v) Jacobian factor consumes one degree).
    """
    u, wu = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (u + 1.0)
    wu = 0.5 * wu
    uu, vv = np.meshgrid(u, u, indexing="ij")
    ww = np.outer(wu, wu) * (1.0 - vv)
    return (uu * (1.0 - vv)).ravel(), vv.ravel(), ww.ravel()
