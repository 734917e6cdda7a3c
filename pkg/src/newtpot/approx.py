"""Monomial expansion machinery.

Monomial (Taylor-type) bases are exponentially ill-conditioned on any real
node set, yet when the sampled function is smooth and the linear system is
solved either by a truncated SVD or by pivoted LU with a tiny random
pollution, the resulting expansion approximates the function uniformly to
near machine precision.  This module implements both solvers with explicit
per-solve diagnostics (solution norm, residual norm, matrix norm, kept
rank), 1-D and 2-D collocation fits, Horner evaluation, and cheap a
posteriori error estimators.

Coefficient conventions
-----------------------
2-D expansions of order N collect a_{m,n} for 0 <= n <= m <= N representing

    sum_m sum_n a_{m,n} * x^(m-n) * y^n

in the standardized (unit bounding circle) frame; the flat ordering is m
ascending, n ascending within m.  1-D expansions hold complex coefficients
c_0..c_K of sum_k c_k t^k in a standardized edge parameter (real t on
straight edges, a unit-circle-scaled complex position on curved ones).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import NewtpotError, SolveError
from .quadrule import gauss_legendre, lebesgue_constant_tri, tri_nodes

logger = logging.getLogger(__name__)

EPS = float(np.finfo(np.float64).eps)
TSVD_CUTOFF_FACTOR = 3.0          # discard sigma_i <= 3 * eps * ||A||_2
RESIDUAL_CONTRACT_FACTOR = 10.0   # backward-stable residual slack
POWER_ITERATIONS = 20


def monomial_pairs(order: int) -> list[tuple[int, int]]:
    """Canonical (m, n) ordering of coefficients a_{m,n}."""
    return [(m, n) for m in range(order + 1) for n in range(m + 1)]


def coefficient_count(order: int) -> int:
    return (order + 1) * (order + 2) // 2


@dataclass
class SolveReport:
    """Diagnostics for a single linear solve.

    The residual contract (a backward-stable solve leaves a residual no
    larger than a small multiple of eps * ||A|| * ||x||) is checked by
    ``residual_ok``; the ``estimator`` field carries the essentially-free
    a posteriori indicator eps * ||x|| * 6 (1 + log(n)/pi) sqrt(n).
    """

    size: int
    rank: int
    solution_norm: float
    residual_norm: float
    matrix_norm: float
    estimator: float
    solver: str
    seed: Optional[int] = None

    def residual_ok(self, factor: float = RESIDUAL_CONTRACT_FACTOR) -> bool:
        return self.residual_norm <= factor * EPS * self.matrix_norm * self.solution_norm + 1e-300

    def to_dict(self) -> dict:
        return {
            "size": self.size, "rank": self.rank,
            "solution_norm": self.solution_norm,
            "residual_norm": self.residual_norm,
            "matrix_norm": self.matrix_norm,
            "estimator": self.estimator,
            "solver": self.solver, "seed": self.seed,
        }


@dataclass
class MonomialExpansion2D:
    """Real 2-D monomial expansion in the standardized element frame."""

    order: int
    coef: np.ndarray  # flat, canonical ordering

    def __post_init__(self):
        want = coefficient_count(self.order)
        if self.coef.shape != (want,):
            raise NewtpotError(f"expected {want} coefficients, got {self.coef.shape}")
        if not np.all(np.isfinite(self.coef)):
            raise NewtpotError("non-finite expansion coefficients")
        self._powmat = None

    def power_matrix(self) -> np.ndarray:
        """Dense (i, j) -> coefficient of x^i y^j table for Horner evaluation."""
        if self._powmat is None:
            p = np.zeros((self.order + 1, self.order + 1))
            for (m, n), a in zip(monomial_pairs(self.order), self.coef):
                p[m - n, n] = a
            self._powmat = p
        return self._powmat


@dataclass
class MonomialExpansion1D:
    """Complex 1-D monomial expansion along a standardized edge."""

    order: int
    coef: np.ndarray

    def __post_init__(self):
        if self.coef.shape != (self.order + 1,):
            raise NewtpotError("1-D coefficient count mismatch")
        if not np.all(np.isfinite(self.coef)):
            raise NewtpotError("non-finite 1-D coefficients")


# ---------------------------------------------------------------------------
# Norm estimation and pollution
# ---------------------------------------------------------------------------

def estimate_2norm(a: np.ndarray, seed: int = 12345) -> float:
    """Spectral norm estimate via a fixed number of power iterations."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(a.shape[1])
    v /= np.linalg.norm(v)
    ah = a.conj().T
    sigma = 0.0
    for _ in range(POWER_ITERATIONS):
        w = ah @ (a @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        sigma = math.sqrt(nw)
    return sigma


def _splitmix64(seed: int, count: int) -> np.ndarray:
    """Deterministic xorshift-multiply hash stream, uniform in [-1, 1)."""
    with np.errstate(over="ignore"):
        idx = np.arange(count, dtype=np.uint64)
        z = (np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
             + idx * np.uint64(0x9E3779B97F4A7C15))
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (2.0 ** -52) - 1.0


def pollution_matrix(shape: tuple[int, int], seed: int, norm: float) -> np.ndarray:
    """Seeded random matrix rescaled so its 2-norm estimate equals ``norm``."""
    e = _splitmix64(seed, shape[0] * shape[1]).reshape(shape)
    scale = estimate_2norm(e, seed=seed ^ 0x5555)
    if scale == 0.0:
        return np.zeros(shape)
    return e * (norm / scale)


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------

def _finish_report(a, b, x, rank, matrix_norm, solver, seed=None) -> SolveReport:
    res = float(np.linalg.norm(a @ x - b))
    xn = float(np.linalg.norm(x))
    n = len(x)
    est = EPS * xn * 6.0 * (1.0 + math.log(n) / math.pi) * math.sqrt(n)
    return SolveReport(size=n, rank=rank, solution_norm=xn, residual_norm=res,
                       matrix_norm=float(matrix_norm), estimator=est,
                       solver=solver, seed=seed)


def solve_truncated_svd(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, SolveReport]:
    """Least-norm solve discarding singular values <= 3 eps ||A||_2."""
    a = np.asarray(a)
    b = np.asarray(b)
    if not np.all(np.isfinite(a)):
        raise SolveError("non-finite matrix entries")
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise SolveError(f"SVD did not converge: {exc}") from exc
    norm = s[0] if len(s) else 0.0
    keep = s > TSVD_CUTOFF_FACTOR * EPS * norm
    rank = int(keep.sum())
    ut_b = u.conj().T @ b
    x = vh[:rank].conj().T @ (ut_b[:rank] / s[:rank])
    return x, _finish_report(a, b, x, rank, norm, "tsvd")


def solve_polluted_lu(a: np.ndarray, b: np.ndarray,
                      seed: int = 0) -> tuple[np.ndarray, SolveReport]:
    """Pivoted LU solve of (A + E) x = b with ||E||_2 = eps ||A||_2.

    The pollution nudges the tiny singular values of an exponentially
    ill-conditioned Vandermonde matrix up to the eps floor, after which
    plain Gaussian elimination behaves like a rank-revealing solver.
    Deterministic for a fixed seed.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] != a.shape[1]:
        raise SolveError("polluted LU requires a square system")
    norm = estimate_2norm(a)
    e = pollution_matrix(a.shape, seed, EPS * norm)
    try:
        lu, piv = sla.lu_factor(a + e)
        x = sla.lu_solve((lu, piv), b)
    except (sla.LinAlgError, ValueError) as exc:
        raise SolveError(f"LU factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolveError("polluted LU produced non-finite solution")
    return x, _finish_report(a, b, x, len(x), norm, "plu", seed=seed)


class Factorized1D:
    """Reusable factorization of one 1-D collocation matrix.

    Straight edges all share the standard Gauss-Legendre Vandermonde on
    [-1, 1], so the factorization is built once per (order, solver, seed)
    and reused; curved edges get a throwaway instance for their own complex
    node set.
    """

    def __init__(self, nodes: np.ndarray, order: int, solver: str, seed: int = 0):
        self.order = order
        self.solver = solver
        self.seed = seed
        self.nodes = np.asarray(nodes)
        if len(self.nodes) != order + 1:
            raise NewtpotError("1-D collocation needs order+1 nodes")
        self.matrix = np.vander(self.nodes, order + 1, increasing=True)
        if solver == "tsvd":
            u, s, vh = np.linalg.svd(self.matrix)
            self._svd = (u, s, vh)
            self.matrix_norm = float(s[0])
            self._keep = s > TSVD_CUTOFF_FACTOR * EPS * self.matrix_norm
        elif solver == "plu":
            self.matrix_norm = estimate_2norm(self.matrix)
            e = pollution_matrix(self.matrix.shape, seed, EPS * self.matrix_norm)
            self._lu = sla.lu_factor(self.matrix + e)
        else:
            raise NewtpotError(f"unknown solver '{solver}'")

    def solve(self, values: np.ndarray) -> tuple[np.ndarray, SolveReport]:
        values = np.asarray(values)
        if self.solver == "tsvd":
            u, s, vh = self._svd
            rank = int(self._keep.sum())
            ub = u.conj().T @ values
            x = vh[:rank].conj().T @ (ub[:rank] / s[:rank])
        else:
            x = sla.lu_solve(self._lu, values)
            rank = self.order + 1
        return x, _finish_report(self.matrix, values, x, rank,
                                 self.matrix_norm, self.solver,
                                 seed=self.seed if self.solver == "plu" else None)


@lru_cache(maxsize=256)
def standard_edge_solver(order: int, solver: str, seed: int = 0) -> Factorized1D:
    """Shared factorization for the standard GL-node Vandermonde on [-1, 1]."""
    return Factorized1D(gauss_legendre(order + 1).nodes, order, solver, seed)


# ---------------------------------------------------------------------------
# Collocation fits
# ---------------------------------------------------------------------------

def vandermonde_2d(points, order: int) -> np.ndarray:
    """Rows x~^(m-n) y~^n in canonical ordering at standardized points."""
    pts = np.asarray(points)
    if np.iscomplexobj(pts):
        x, y = pts.real, pts.imag
    else:
        x, y = pts[:, 0], pts[:, 1]
    xp = np.vander(x, order + 1, increasing=True)
    yp = np.vander(y, order + 1, increasing=True)
    cols = [xp[:, m - n] * yp[:, n] for m, n in monomial_pairs(order)]
    return np.column_stack(cols)


def fit_monomial_2d(points, values, order: int, solver: str = "plu",
                    seed: int = 0) -> tuple[MonomialExpansion2D, SolveReport]:
    """Collocation fit of sampled values by a 2-D monomial expansion.

    ``points`` are already standardized (unit bounding circle frame).  A
    square system (len(points) == coefficient count) may use either solver;
    oversampled fits fall back to the truncated SVD.
    """
    a = vandermonde_2d(points, order)
    values = np.asarray(values, dtype=float)
    if a.shape[0] != a.shape[1] and solver == "plu":
        raise SolveError("polluted LU needs a square collocation system")
    if solver == "tsvd" or a.shape[0] != a.shape[1]:
        x, report = solve_truncated_svd(a, values)
    else:
        x, report = solve_polluted_lu(a, values, seed=seed)
    return MonomialExpansion2D(order=order, coef=x), report


def fit_monomial_1d(values, order: int, nodes=None, solver: str = "plu",
                    seed: int = 0,
                    factorization: Optional[Factorized1D] = None,
                    ) -> tuple[MonomialExpansion1D, SolveReport]:
    """Fit complex nodal values by a 1-D monomial expansion.

    With no explicit ``nodes``/``factorization`` the standard (cached)
    Gauss-Legendre Vandermonde on [-1, 1] is used; curved edges pass their
    own complex collocation positions.
    """
    if factorization is None:
        if nodes is None:
            factorization = standard_edge_solver(order, solver, seed)
        else:
            factorization = Factorized1D(np.asarray(nodes), order, solver, seed)
    coef, report = factorization.solve(np.asarray(values, dtype=complex))
    return MonomialExpansion1D(order=order, coef=coef), report


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def eval_monomial_2d(expansion: MonomialExpansion2D, points) -> np.ndarray:
    """Nested Horner evaluation; O(N^2) multiplications per point."""
    pts = np.asarray(points)
    if np.iscomplexobj(pts):
        x, y = pts.real, pts.imag
    else:
        x, y = pts[..., 0], pts[..., 1]
    p = expansion.power_matrix()
    deg = expansion.order
    acc = np.zeros_like(np.asarray(x, dtype=float))
    for i in range(deg, -1, -1):
        inner = np.full_like(acc, p[i, deg - i])
        for j in range(deg - i - 1, -1, -1):
            inner = inner * y + p[i, j]
        acc = acc * x + inner
    return acc


def expansion_dx(expansion: MonomialExpansion2D) -> MonomialExpansion2D:
    """Analytic d/dx as a new expansion of one order lower."""
    order = max(expansion.order - 1, 0)
    out = np.zeros(coefficient_count(order))
    idx = {pair: k for k, pair in enumerate(monomial_pairs(order))}
    for (m, n), a in zip(monomial_pairs(expansion.order), expansion.coef):
        i, j = m - n, n
        if i >= 1:
            out[idx[(i - 1 + j, j)]] += a * i
    return MonomialExpansion2D(order=order, coef=out)


def expansion_dy(expansion: MonomialExpansion2D) -> MonomialExpansion2D:
    order = max(expansion.order - 1, 0)
    out = np.zeros(coefficient_count(order))
    idx = {pair: k for k, pair in enumerate(monomial_pairs(order))}
    for (m, n), a in zip(monomial_pairs(expansion.order), expansion.coef):
        i, j = m - n, n
        if j >= 1:
            out[idx[(i + j - 1, j - 1)]] += a * j
    return MonomialExpansion2D(order=order, coef=out)


def grad_monomial_2d(expansion: MonomialExpansion2D, points
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Gradient from analytically differentiated coefficients."""
    return (eval_monomial_2d(expansion_dx(expansion), points),
            eval_monomial_2d(expansion_dy(expansion), points))


def laplacian_expansion(expansion: MonomialExpansion2D) -> MonomialExpansion2D:
    """Analytic Laplacian; used to verify anti-Laplacian maps."""
    order = max(expansion.order - 2, 0)
    out = np.zeros(coefficient_count(order))
    idx = {pair: k for k, pair in enumerate(monomial_pairs(order))}
    for (m, n), a in zip(monomial_pairs(expansion.order), expansion.coef):
        i, j = m - n, n
        if i >= 2:
            out[idx[(i - 2 + j, j)]] += a * i * (i - 1)
        if j >= 2:
            out[idx[(i + j - 2, j - 2)]] += a * j * (j - 1)
    return MonomialExpansion2D(order=order, coef=out)


def eval_monomial_1d(expansion: MonomialExpansion1D, t) -> np.ndarray:
    t = np.asarray(t)
    acc = np.full_like(t, expansion.coef[-1], dtype=complex)
    for c in expansion.coef[-2::-1]:
        acc = acc * t + c
    return acc


# ---------------------------------------------------------------------------
# A posteriori error estimation
# ---------------------------------------------------------------------------

def chebyshev_nodes(n: int) -> np.ndarray:
    """First-kind Chebyshev nodes (roots), ascending, n points."""
    j = np.arange(n)
    return np.sort(np.cos((2 * j + 1) * np.pi / (2 * n)))


@lru_cache(maxsize=128)
def lebesgue_constant_1d(n_nodes: int, family: str) -> float:
    """Numerical Lebesgue constant of interpolation at a canonical node set."""
    if family == "chebyshev":
        nodes = chebyshev_nodes(n_nodes)
    elif family == "legendre":
        nodes = gauss_legendre(n_nodes).nodes
    else:
        raise NewtpotError(f"unknown 1-D node family '{family}'")
    t = np.linspace(-1.0, 1.0, 4001)
    # barycentric cardinal functions
    w = np.ones(n_nodes)
    for i in range(n_nodes):
        w[i] = 1.0 / np.prod(nodes[i] - np.delete(nodes, i))
    diff = t[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-15)
    diff = np.where(exact, 1.0, diff)
    terms = w / diff
    denom = terms.sum(axis=1)
    sums = np.abs(terms / denom[:, None]).sum(axis=1)
    sums[exact.any(axis=1)] = 1.0  # interpolation is exact at the nodes
    return float(sums.max())


def error_estimate(report: SolveReport, order: int, family: str) -> float:
    """Cheap uniform-error indicator for a collocation fit.

    For Chebyshev-type node families this is the closed-form bound
    eps * ||a|| * 6 (1 + log(N+1)/pi) sqrt(N+1); for Gauss-Legendre and
    triangle families it is eps * (Lambda_N + 1) * ||S|| * ||a|| with the
    Lebesgue constant computed numerically (and cached).
    """
    xn = report.solution_norm
    if xn == 0.0:
        return 0.0
    if family == "chebyshev":
        return (EPS * xn * 6.0
                * (1.0 + math.log(order + 1) / math.pi) * math.sqrt(order + 1))
    if family == "legendre":
        lam = lebesgue_constant_1d(order + 1, "legendre")
    elif family == "triangle":
        lam = _triangle_lebesgue(order)
    else:
        raise NewtpotError(f"unknown node family '{family}'")
    return EPS * (lam + 1.0) * report.matrix_norm * xn


@lru_cache(maxsize=32)
def _triangle_lebesgue(order: int) -> float:
    return lebesgue_constant_tri(tri_nodes(order).points, order)
