"""Quadrature rules and interpolation node sets.

Provides Gauss-Legendre rules on [-1, 1], well-conditioned interpolation /
quadrature node sets on the reference simplex (shipped as text assets, with
a deterministic warped tensor fallback), and a globally adaptive triangle
integrator used as the ground-truth oracle throughout the test suite.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Optional

import numpy as np
from scipy.linalg import qr

from . import koornwinder as kw
from .errors import ConvergenceError, NewtpotError

logger = logging.getLogger(__name__)

MAX_GAUSS_ORDER = 200
MAX_TRI_ORDER = 20
NODE_ASSET_DIR = "_nodes"


@dataclass(frozen=True)
class Rule1D:
    """Gauss-Legendre rule: nodes in (-1, 1), positive weights, sum = 2."""

    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class TriNodeSet:
    """Interpolation/quadrature nodes on the reference simplex.

    ``points`` has shape (M, 2) with M = (order+1)(order+2)/2, all strictly
    inside the simplex.  ``weights`` are moment-fitted quadrature weights
    (sum = 1/2, exact for total degree <= order).  ``from_asset`` is False
    when the set was produced by the runtime fallback construction.
    """

    order: int
    points: np.ndarray
    weights: np.ndarray
    family: str
    from_asset: bool

    def __len__(self) -> int:
        return len(self.points)


@lru_cache(maxsize=256)
def gauss_legendre(n: int) -> Rule1D:
    """Gauss-Legendre rule with n nodes on [-1, 1]."""
    if not 1 <= n <= MAX_GAUSS_ORDER:
        raise NewtpotError(f"Gauss-Legendre size {n} outside [1, {MAX_GAUSS_ORDER}]")
    x, w = np.polynomial.legendre.leggauss(n)
    return Rule1D(nodes=x, weights=w)


# ---------------------------------------------------------------------------
# Triangle node sets
# ---------------------------------------------------------------------------

def _interior_candidate_grid(order: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Strictly interior lattice on the simplex (barycentric grid, margin in)."""
    i, j = np.meshgrid(np.arange(1, m), np.arange(1, m), indexing="ij")
    keep = (i + j) <= m - 1
    x = i[keep] / m
    y = j[keep] / m
    return x, y


def _fekete_points(order: int, grid_m: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Approximate Fekete points by QR column pivoting on the basis matrix."""
    if grid_m == 0:
        grid_m = max(12 * order, 60)
    x, y = _interior_candidate_grid(order, grid_m)
    v = kw.koornwinder_basis(x, y, order)
    # Columns of v.T are candidate points; pivoted QR greedily picks the
    # best-conditioned subset of size basis_size(order).
    _, _, piv = qr(v.T, mode="economic", pivoting=True)
    sel = piv[: kw.basis_size(order)]
    return x[sel].copy(), y[sel].copy()


def _polish_fekete(x: np.ndarray, y: np.ndarray, order: int,
                   iters: int = 120) -> tuple[np.ndarray, np.ndarray]:
    """Ascend log|det V| (the Fekete objective) with projected backtracking."""
    h = 1e-6
    margin = 1e-7

    def logdet(xx, yy):
        return np.linalg.slogdet(kw.koornwinder_basis(xx, yy, order))[1]

    for _ in range(iters):
        v = kw.koornwinder_basis(x, y, order)
        g = np.linalg.inv(v)
        vx = (kw.koornwinder_basis(x + h, y, order)
              - kw.koornwinder_basis(x - h, y, order)) / (2 * h)
        vy = (kw.koornwinder_basis(x, y + h, order)
              - kw.koornwinder_basis(x, y - h, order)) / (2 * h)
        gx = np.einsum("ji,ij->i", g, vx)
        gy = np.einsum("ji,ij->i", g, vy)
        step = 0.1 / max(np.hypot(gx, gy).max(), 1e-12)
        ld0 = logdet(x, y)
        for _bt in range(25):
            xn, yn = x + step * gx, y + step * gy
            ok = (xn > margin) & (yn > margin) & (xn + yn < 1 - margin)
            if ok.all() and logdet(xn, yn) > ld0:
                x, y = xn, yn
                break
            step *= 0.5
        else:
            break
    return x, y


def _moment_weights(x: np.ndarray, y: np.ndarray, order: int) -> np.ndarray:
    """Interpolatory quadrature weights: exact for total degree <= order."""
    v = kw.koornwinder_basis(x, y, order)
    mom = np.zeros(kw.basis_size(order))
    # Only the constant basis function has a nonzero integral over T.
    k0 = kw.koornwinder_basis(np.array([1 / 3]), np.array([1 / 3]), 0)[0, 0]
    mom[0] = 0.5 * k0  # integral of the constant mode: value * area
    return np.linalg.solve(v.T, mom)


def _warped_tensor_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic fallback: Gauss-graded triangular lattice on the simplex.

    Takes the triangular subset {i + j <= order} of a Gauss-Legendre point
    ladder and maps it into the simplex in barycentric form.  Conditioning is
    inferior to the shipped tables but adequate as an emergency fallback.
    """
    g = 0.5 * (gauss_legendre(order + 1).nodes + 1.0)  # sorted in (0, 1)
    xs, ys = [], []
    for i in range(order + 1):
        for j in range(order + 1 - i):
            k = order - i - j
            # Barycentric blend of the graded ladder, symmetrized.
            u, v, w = g[i], g[j], g[k]
            s = u + v + w
            xs.append(u / s)
            ys.append(v / s)
    return np.asarray(xs), np.asarray(ys)


def lebesgue_constant_tri(points: np.ndarray, order: int, dense: int = 60) -> float:
    """Numerical Lebesgue constant of 2-D interpolation at the given nodes."""
    xq, yq = [], []
    for i in range(dense + 1):
        for j in range(dense + 1 - i):
            xq.append(i / dense)
            yq.append(j / dense)
    xq = np.asarray(xq)
    yq = np.asarray(yq)
    vn = kw.koornwinder_basis(points[:, 0], points[:, 1], order)
    vq = kw.koornwinder_basis(xq, yq, order)
    cardinals = np.linalg.solve(vn.T, vq.T)  # (M, nq)
    return float(np.abs(cardinals).sum(axis=0).max())


def _format_asset(order: int, x: np.ndarray, y: np.ndarray, w: np.ndarray,
                  family: str) -> str:
    lines = [
        "# newtpot triangle nodes v1",
        f"# family={family} order={order} count={len(x)}",
    ]
    for xi, yi, wi in zip(x, y, w):
        lines.append(f"{xi:.17g} {yi:.17g} {wi:.17g}")
    return "\n".join(lines) + "\n"


def _parse_asset(text: str, order: int) -> TriNodeSet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("# newtpot triangle nodes"):
        raise NewtpotError(f"bad node asset header for order {order}")
    family = "unknown"
    for ln in lines:
        if ln.startswith("# family="):
            family = ln.split("family=")[1].split()[0]
    rows = [ln.split() for ln in lines if not ln.startswith("#")]
    data = np.asarray(rows, dtype=float)
    want = kw.basis_size(order)
    if data.shape != (want, 3):
        raise NewtpotError(
            f"node asset for order {order}: expected {want} rows, got {data.shape[0]}")
    return TriNodeSet(order=order, points=data[:, :2].copy(),
                      weights=data[:, 2].copy(), family=family, from_asset=True)


@lru_cache(maxsize=64)
def tri_nodes(order: int, allow_fallback: bool = True) -> TriNodeSet:
    """Interpolation nodes of the given total-degree order on the simplex.

    Loads the shipped table when available; otherwise builds the warped
    tensor fallback (flagged via ``from_asset=False``).
    """
    if not 1 <= order <= MAX_TRI_ORDER:
        raise NewtpotError(f"triangle node order {order} outside [1, {MAX_TRI_ORDER}]")
    name = f"vr_nodes_{order}.txt"
    try:
        text = (resources.files(__package__) / NODE_ASSET_DIR / name).read_text()
        return _parse_asset(text, order)
    except FileNotFoundError:
        if not allow_fallback:
            raise NewtpotError(f"no node table for order {order} and fallback disabled")
    logger.warning("node table %s missing; using warped tensor fallback", name)
    x, y = _warped_tensor_nodes(order)
    w = _moment_weights(x, y, order)
    return TriNodeSet(order=order, points=np.column_stack([x, y]),
                      weights=w, family="warped-tensor-fallback", from_asset=False)


def generate_node_asset(order: int) -> str:
    """Build the shipped node table text for one order (dev-time helper)."""
    x, y = _fekete_points(order)
    x, y = _polish_fekete(x, y, order)
    w = _moment_weights(x, y, order)
    return _format_asset(order, x, y, w, family="fekete-qr")


# ---------------------------------------------------------------------------
# Adaptive integration over (possibly curved) triangles
# ---------------------------------------------------------------------------

class _AffineDomain:
    """Reference-simplex to physical map for a plain vertex triangle."""

    def __init__(self, verts):
        v = np.asarray(verts)
        if np.iscomplexobj(v) or v.shape == (3,):
            v = np.column_stack([v.real, v.imag])
        v = v.astype(float)
        self.v0 = v[0]
        self.e1 = v[1] - v[0]
        self.e2 = v[2] - v[0]
        self.jac = abs(self.e1[0] * self.e2[1] - self.e1[1] * self.e2[0])

    def map_reference(self, xi, eta):
        x = self.v0[0] + self.e1[0] * xi + self.e2[0] * eta
        y = self.v0[1] + self.e1[1] * xi + self.e2[1] * eta
        return x, y, np.full_like(np.asarray(xi, dtype=float), self.jac)


def _as_domain(element):
    if hasattr(element, "map_reference"):
        return element
    return _AffineDomain(element)


_RULE_HI_ORDER = 12
_RULE_LO_ORDER = 8


@lru_cache(maxsize=8)
def _panel_rules(hi_order: int, lo_order: int):
    hi = tri_nodes(hi_order)
    lo = tri_nodes(lo_order)
    return (hi.points, hi.weights, lo.points, lo.weights)


def adaptive_triangle_integrate(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    element,
    tol: float,
    *,
    target: Optional[complex] = None,
    max_depth: int = 40,
    max_panels: int = 400_000,
) -> float:
    """Globally adaptive integral of ``f`` over a (possibly curved) triangle.

    ``f(x, y)`` must accept vectorized coordinate arrays.  ``element`` is
    either a 3-vertex array-like or any object exposing
    ``map_reference(xi, eta) -> (x, y, |J|)`` (curved elements do).  Panels
    are 4-way midpoint-split in reference coordinates; each panel carries a
    two-level error estimate (high-order rule vs embedded lower-order rule).
    When ``target`` is given, panels are additionally graded toward it so
    that nearly-singular integrands converge; non-finite integrand values in
    a panel whose diameter has collapsed below 1e-8 of the domain scale are
    masked (integrable point singularities).

    Raises ConvergenceError (carrying the best estimate) if the requested
    tolerance is not reached within the depth/panel caps.
    """
    if tol < 1e-15:
        raise NewtpotError("adaptive tolerance below 1e-15 is not attainable")
    dom = _as_domain(element)
    hp, hw, lp, lw = _panel_rules(_RULE_HI_ORDER, _RULE_LO_ORDER)

    # Panels stored as arrays of reference vertices (n, 3) as complex.
    verts = np.array([[0.0 + 0.0j, 1.0 + 0.0j, 0.0 + 1.0j]])
    depth = np.array([0])

    def eval_panels(pv):
        n = len(pv)
        vals_hi = np.empty(n)
        vals_lo = np.empty(n)
        diam = np.empty(n)
        dist = np.full(n, np.inf)
        scale = np.empty(n)
        for pts, wts, out in ((hp, hw, vals_hi), (lp, lw, vals_lo)):
            xi = (pv[:, 0].real[:, None]
                  + (pv[:, 1] - pv[:, 0]).real[:, None] * pts[:, 0]
                  + (pv[:, 2] - pv[:, 0]).real[:, None] * pts[:, 1])
            eta = (pv[:, 0].imag[:, None]
                   + (pv[:, 1] - pv[:, 0]).imag[:, None] * pts[:, 0]
                   + (pv[:, 2] - pv[:, 0]).imag[:, None] * pts[:, 1])
            x, y, jac = dom.map_reference(xi.ravel(), eta.ravel())
            fv = np.asarray(f(x, y), dtype=float) * jac
            fv = fv.reshape(n, len(pts))
            bad = ~np.isfinite(fv)
            if bad.any():
                fv = np.where(bad, 0.0, fv)
            # Reference sub-triangle area relative to the full simplex.
            a = (pv[:, 1] - pv[:, 0]) * np.conj(pv[:, 2] - pv[:, 0])
            ref_area = 0.5 * np.abs(a.imag)
            out[:] = (fv * wts).sum(axis=1) * (ref_area / 0.5)
            if out is vals_hi:
                z = (x + 1j * y).reshape(n, len(pts))
                dmax = np.abs(z - z[:, :1]).max(axis=1)
                diam[:] = 2.0 * dmax
                scale[:] = np.abs(z).max(axis=1) + 1.0
                if target is not None:
                    dist[:] = np.abs(z - target).min(axis=1)
        return vals_hi, vals_lo, diam, dist, scale

    vh, vl, diam, dist, _ = eval_panels(verts)
    err = np.abs(vh - vl)
    domain_scale = max(diam[0], 1.0)

    for _ in range(max_depth + 1):
        graded = np.zeros(len(verts), dtype=bool)
        if target is not None:
            graded = (dist < diam) & (diam > 1e-8 * domain_scale)
        total_err = err.sum() + graded.sum() * tol
        if total_err <= tol:
            return float(vh.sum())
        if len(verts) > max_panels:
            break
        split = (err > 0.25 * tol / max(len(verts), 1)) | graded
        if not split.any():
            return float(vh.sum())
        keep = ~split
        sv = verts[split]
        m01 = 0.5 * (sv[:, 0] + sv[:, 1])
        m12 = 0.5 * (sv[:, 1] + sv[:, 2])
        m02 = 0.5 * (sv[:, 0] + sv[:, 2])
        children = np.concatenate([
            np.stack([sv[:, 0], m01, m02], axis=1),
            np.stack([m01, sv[:, 1], m12], axis=1),
            np.stack([m02, m12, sv[:, 2]], axis=1),
            np.stack([m01, m12, m02], axis=1),
        ])
        cvh, cvl, cdiam, cdist, _ = eval_panels(children)
        cerr = np.abs(cvh - cvl)
        verts = np.concatenate([verts[keep], children])
        vh = np.concatenate([vh[keep], cvh])
        vl = np.concatenate([vl[keep], cvl])
        err = np.concatenate([err[keep], cerr])
        diam = np.concatenate([diam[keep], cdiam])
        dist = np.concatenate([dist[keep], cdist])
        depth = np.concatenate([depth[keep], np.repeat(depth[split], 4) + 1])
        if depth.max() > max_depth:
            break

    best = float(vh.sum())
    raise ConvergenceError(
        f"adaptive integration stalled at estimated error {err.sum():.3e} "
        f"(tol {tol:.3e})", best_estimate=best, error_estimate=float(err.sum()))
