"""Single- and double-layer potentials over straight and curved edges.

Close targets (inside the 1.3-radius disk of an edge's standardized frame)
are handled by expanding the densities in complex monomials and evaluating

    p_k = integral of  v^k / (v - x)  dv
    q_k = integral of  v^k log(v - x) dv

over the edge, where v is the standardized edge variable (real t in [-1, 1]
on straight edges, the unit-disk-scaled complex position on curved ones).
The p_k follow the two-term forward recurrence seeded by an exact log
formula; targets in the outer shell of the close zone (|x| > 1.05), where
the forward recurrence amplifies roundoff, instead use a graded composite
Gauss-Legendre rule evaluated for all k at once.  The q_k always come from
the exact integration-by-parts identity.

On curved edges the endpoint logarithms must follow the branch that is
continuous along the curve: each target gets a rotated branch cut chosen so
that the cut ray leaves the target away from the curve (away from the
nearest curve point, falling back to the chord normal keyed on the
interior/exterior side hint).  Far targets use plain upsampled
Gauss-Legendre quadrature of the physical kernels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.polynomial import chebyshev as _cheb

from .errors import GeometryError, OnBoundaryError
from .geom import Edge, bounding_circle
from .quadrule import gauss_legendre

logger = logging.getLogger(__name__)

CLOSE_ZONE = 1.3          # close-evaluation disk radius in the edge frame
RECURRENCE_ZONE = 1.05    # forward recurrence used inside this radius
ON_BOUNDARY_TOL = 1e-13
_POLYLINE_N = 129


@dataclass
class EdgeFrame:
    """Standardized coordinates of one directed edge of an element.

    Straight edges use the affine frame v(t) = mid + t * half, t in [-1, 1];
    the standardized target is (x - mid) / half.  Curved edges are recentred
    on the bounding circle of the (element-standardized) curve, so the edge
    variable is v = (z - center) / radius with |v| <= 1 along the curve.

    The physical endpoints are retained so that the endpoint differences
    v_end - v(target), which enter every logarithm, can be formed in
    physical coordinates first; deriving them from the rounded frame
    coordinate would lose all relative accuracy for targets within ~1e-9
    of a vertex.
    """

    is_curved: bool
    phys_a: complex = 0.0j
    phys_b: complex = 0.0j
    # straight
    mid: complex = 0.0j
    half: complex = 0.0j
    # curved
    center: complex = 0.0j
    radius: float = 1.0
    zeta_cheb: Optional[np.ndarray] = None
    za: complex = 0.0j
    zb: complex = 0.0j
    polyline: Optional[np.ndarray] = None
    chord_normal_out: complex = 0.0j
    phys_center: complex = 0.0j   # physical position of the frame origin
    phys_scale: complex = 1.0     # physical length of one frame unit
    _quad_cache: dict = field(default_factory=dict, repr=False)

    @staticmethod
    def from_edge(edge: Edge, origin: complex, scale: float,
                  s_range: tuple[float, float] = (0.0, 1.0)) -> "EdgeFrame":
        """Build the frame of an edge (or sub-panel) after standardization.

        ``origin``/``scale`` are the element's bounding circle, so the edge
        geometry is first mapped through z -> (z - origin) / scale.  For
        curved edges a parameter sub-range selects one panel of the curve
        (close evaluation splits strongly curved edges into gently curved
        panels, each with its own frame).
        """
        s0, s1 = s_range
        pa = edge.point(s0) if s0 > 0.0 else edge.a
        pb = edge.point(s1) if s1 < 1.0 else edge.b
        a = (pa - origin) / scale
        b = (pb - origin) / scale
        if not edge.is_curved:
            half = 0.5 * (b - a)
            return EdgeFrame(is_curved=False, phys_a=pa, phys_b=pb,
                             mid=0.5 * (a + b), half=half,
                             phys_center=0.5 * (pa + pb),
                             phys_scale=0.5 * (pb - pa))
        if s_range != (0.0, 1.0):
            # re-expand gamma over the sub-range (degree is preserved)
            deg = len(edge.cheb) - 1
            t = np.cos(np.pi * (2 * np.arange(2 * deg + 8) + 1)
                       / (2 * (2 * deg + 8)))
            svals = s0 + 0.5 * (t + 1.0) * (s1 - s0)
            cheb = _cheb.chebfit(t, edge.point(svals), deg)
        else:
            cheb = edge.cheb
        cheb_std = cheb / scale
        cheb_std[0] -= origin / scale
        s = np.linspace(0.0, 1.0, _POLYLINE_N)
        samples_std = _cheb.chebval(2.0 * s - 1.0, cheb_std)
        c, r = bounding_circle(samples_std)
        zc = cheb_std / r
        zc[0] -= c / r
        poly = (samples_std - c) / r
        za, zb = poly[0], poly[-1]
        chord = (zb - za) / abs(zb - za)
        return EdgeFrame(is_curved=True, phys_a=pa, phys_b=pb,
                         center=c, radius=r, zeta_cheb=zc,
                         za=za, zb=zb, polyline=poly,
                         chord_normal_out=-1j * chord,
                         phys_center=origin + scale * c,
                         phys_scale=scale * r)

    def target_data(self, z_phys) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(coord, va - coord, vb - coord) from physical targets.

        The two endpoint differences are exact to relative rounding even for
        targets arbitrarily close to a vertex.
        """
        z = np.asarray(z_phys, dtype=complex)
        if not self.is_curved:
            ba = self.phys_b - self.phys_a
            xe = (2.0 * z - self.phys_a - self.phys_b) / ba
            wa = 2.0 * (self.phys_a - z) / ba
            wb = 2.0 * (self.phys_b - z) / ba
            return xe, wa, wb
        xe = (z - self.phys_center) / self.phys_scale
        wa = (self.phys_a - z) / self.phys_scale
        wb = (self.phys_b - z) / self.phys_scale
        return xe, wa, wb

    # -- geometry ----------------------------------------------------------

    @property
    def scale(self) -> complex:
        """dz = scale * dv along the edge (complex for straight edges)."""
        return self.half if not self.is_curved else self.radius

    @property
    def log_offset(self) -> complex:
        return np.log(self.half) if not self.is_curved else np.log(self.radius)

    @property
    def endpoints(self) -> tuple[complex, complex]:
        return (-1.0 + 0.0j, 1.0 + 0.0j) if not self.is_curved else (self.za, self.zb)

    def target_coord(self, z_std) -> np.ndarray:
        """Edge-frame coordinate of element-standardized targets."""
        z = np.asarray(z_std, dtype=complex)
        if not self.is_curved:
            return (z - self.mid) / self.half
        return (z - self.center) / self.radius

    def variable(self, s) -> np.ndarray:
        """Edge variable v at parameters s in [0, 1]."""
        s = np.asarray(s, dtype=float)
        if not self.is_curved:
            return 2.0 * s - 1.0 + 0.0j
        return _cheb.chebval(2.0 * s - 1.0, self.zeta_cheb)

    def dvariable(self, s) -> np.ndarray:
        """dv/ds at parameters s."""
        s = np.asarray(s, dtype=float)
        if not self.is_curved:
            return np.full_like(s, 2.0, dtype=complex)
        return _cheb.chebval(2.0 * s - 1.0, _cheb.chebder(self.zeta_cheb)) * 2.0

    def position(self, s) -> np.ndarray:
        """Element-standardized position at parameters s."""
        v = self.variable(s)
        if not self.is_curved:
            return self.mid + self.half * v
        return self.center + self.radius * v

    def unit_tangent(self, s) -> np.ndarray:
        dv = self.dvariable(s)
        if not self.is_curved:
            dv = dv * self.half
        return dv / np.abs(dv)

    def arc_factor(self, s) -> np.ndarray:
        """|dz/ds| in element-standardized units."""
        dv = self.dvariable(s)
        return np.abs(dv) * (abs(self.half) if not self.is_curved else self.radius)

    def collocation(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(params s, edge variable v, unit tangent) at n Gauss-Legendre nodes."""
        t = gauss_legendre(n).nodes
        s = 0.5 * (t + 1.0)
        return s, self.variable(s), self.unit_tangent(s)

    def moments(self, kmax: int) -> np.ndarray:
        """m_k = integral of v^k dv along the edge, k = 0..kmax."""
        k = np.arange(kmax + 1)
        va, vb = self.endpoints
        return (vb ** (k + 1) - va ** (k + 1)) / (k + 1)

    def distance(self, z_std) -> np.ndarray:
        """Distance from element-standardized points to the edge (approx.)."""
        z = np.asarray(z_std, dtype=complex)
        if not self.is_curved:
            x = self.target_coord(z)
            t = np.clip(x.real, -1.0, 1.0)
            return np.abs(x - t) * abs(self.half)
        x = self.target_coord(z)
        d = np.abs(x[..., None] - self.polyline[None, :]).min(axis=-1)
        return d * self.radius


def curved_panel_ranges(edge: Edge, max_deviation: float = 0.05
                        ) -> list[tuple[float, float]]:
    """Parameter sub-ranges splitting a curved edge into gentle panels.

    Each panel's sagitta is at most ``max_deviation`` of its chord, which
    keeps the restriction of a 2-D polynomial to the panel representable by
    a short monomial expansion in the panel variable.
    """
    def deviation(s0, s1):
        s = np.linspace(s0, s1, 33)
        g = edge.point(s)
        chord = g[0] + (s - s0) / (s1 - s0) * (g[-1] - g[0])
        return np.abs(g - chord).max() / max(abs(g[-1] - g[0]), 1e-300)

    ranges = [(0.0, 1.0)]
    out = []
    while ranges:
        s0, s1 = ranges.pop()
        if deviation(s0, s1) <= max_deviation or (s1 - s0) < 1e-3:
            out.append((s0, s1))
        else:
            mid = 0.5 * (s0 + s1)
            ranges.extend([(s0, mid), (mid, s1)])
    return sorted(out)


@dataclass
class CauchyTable:
    """p_k and q_k values for a batch of targets; shape (k, ntargets)."""

    kmax: int
    p: np.ndarray  # (kmax + 2, n)
    q: np.ndarray  # (kmax + 1, n)
    p0: np.ndarray  # convenience view of p[0]


def rotated_log(w, cut_dir) -> np.ndarray:
    """log with the branch cut along the ray {s * cut_dir : s > 0}."""
    alpha = np.angle(cut_dir)
    return np.log(-np.asarray(w) * np.exp(-1j * alpha)) + 1j * (alpha - np.pi)


# ---------------------------------------------------------------------------
# Straight-edge tables
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _graded_segment_rule(kmax: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Composite GL rule on [-1, 1], dyadically graded into both endpoints.

    Resolves integrands with poles at distance >= 0.05 from the segment to
    machine precision; returns (nodes, weights, powers[k, node] = t^k).
    """
    breaks = [-1.0]
    for j in range(6, 0, -1):
        breaks.append(-1.0 + 2.0 ** float(-j))
    for j in range(1, 7):
        breaks.append(1.0 - 2.0 ** float(-j))
    breaks.append(1.0)
    rule = gauss_legendre(16)
    ts, ws = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        ts.append(0.5 * (hi + lo) + 0.5 * (hi - lo) * rule.nodes)
        ws.append(0.5 * (hi - lo) * rule.weights)
    t = np.concatenate(ts)
    w = np.concatenate(ws)
    powers = np.vander(t, kmax + 2, increasing=True).T
    return t, w, powers


def cauchy_table_straight(xe, kmax: int, wa=None, wb=None) -> CauchyTable:
    """p_k, q_k on the standardized segment [-1, 1] for off-segment targets.

    The principal logarithm is continuous along the segment, so the branch
    cut of the resulting potentials is exactly the segment itself.  ``wa``
    and ``wb`` optionally supply -1 - xe and 1 - xe computed in physical
    coordinates (full relative accuracy near the endpoints).
    """
    xe = np.atleast_1d(np.asarray(xe, dtype=complex))
    n = len(xe)
    if wa is None:
        wa = -1.0 - xe
    if wb is None:
        wb = 1.0 - xe
    wa = np.atleast_1d(np.asarray(wa, dtype=complex))
    wb = np.atleast_1d(np.asarray(wb, dtype=complex))
    seg_dist = np.where(np.abs(xe.real) <= 1.0, np.abs(xe.imag),
                        np.minimum(np.abs(wa), np.abs(wb)))
    if np.any(seg_dist < ON_BOUNDARY_TOL):
        raise OnBoundaryError("target on the standardized segment")

    lp = np.log(wb)
    lm = np.log(wa)
    p = np.empty((kmax + 2, n), dtype=complex)
    p[0] = lp - lm
    for k in range(1, kmax + 2):
        p[k] = xe * p[k - 1] + (1.0 - (-1.0) ** k) / k

    far = np.abs(xe) > RECURRENCE_ZONE
    if far.any():
        t, w, powers = _graded_segment_rule(kmax)
        kernel = w[None, :] / (t[None, :] - xe[far, None])  # (nf, Q)
        p[:, far] = powers @ kernel.T

    k = np.arange(kmax + 1)
    sign = (-1.0) ** (k + 1)
    q = (lp[None, :] - sign[:, None] * lm[None, :] - p[1:kmax + 2]) / (k + 1)[:, None]
    return CauchyTable(kmax=kmax, p=p, q=q, p0=p[0])


# ---------------------------------------------------------------------------
# Curved-edge tables
# ---------------------------------------------------------------------------

def _ray_hits_polyline(origin: np.ndarray, direction: np.ndarray,
                       poly: np.ndarray) -> np.ndarray:
    """Whether the ray origin + s*direction (s >= 0) meets the polyline."""
    o = origin[:, None]
    d = direction[:, None]
    p0 = poly[None, :-1]
    seg = (poly[1:] - poly[:-1])[None, :]
    denom = (d.real * seg.imag - d.imag * seg.real)
    rel = p0 - o
    tiny = np.abs(denom) < 1e-300
    denom = np.where(tiny, 1.0, denom)
    s_ray = (rel.real * seg.imag - rel.imag * seg.real) / denom
    s_seg = (rel.real * d.imag - rel.imag * d.real) / denom
    hit = (~tiny) & (s_ray >= -1e-12) & (s_seg >= -1e-9) & (s_seg <= 1.0 + 1e-9)
    return hit.any(axis=1)


def _cut_directions(frame: EdgeFrame, xe: np.ndarray, side: np.ndarray) -> np.ndarray:
    """Branch-cut ray directions that avoid the curve, one per target.

    Primary rule: point from the nearest curve point toward the target
    ("cut pushed behind the curve").  If that ray still intersects the
    sampled curve, fall back to the chord normal keyed on the target's
    interior/exterior side.
    """
    poly = frame.polyline
    dmat = np.abs(xe[:, None] - poly[None, :])
    nearest = poly[dmat.argmin(axis=1)]
    dist = dmat.min(axis=1)
    if np.any(dist < ON_BOUNDARY_TOL):
        raise OnBoundaryError("target on a curved edge")
    d = (xe - nearest) / dist
    bad = _ray_hits_polyline(xe, d, poly)
    if bad.any():
        alt = np.where(side[bad] >= 0, -frame.chord_normal_out, frame.chord_normal_out)
        d[bad] = alt
        still = _ray_hits_polyline(xe[bad], d[bad], poly)
        if still.any():
            d2 = -d[bad][still]
            idx = np.flatnonzero(bad)[still]
            d[idx] = d2
            if _ray_hits_polyline(xe[idx], d2, poly).any():
                raise GeometryError("no branch-cut direction avoids the curve")
        logger.debug("branch cut fell back to chord normal for %d targets", bad.sum())
    return d


def _curved_quad_rule(frame: EdgeFrame, kmax: int):
    """Composite GL rule along the curve for outer-shell targets (cached)."""
    key = ("quad", kmax)
    if key not in frame._quad_cache:
        npanel, ngl = 64, 16
        rule = gauss_legendre(ngl)
        edges = np.linspace(0.0, 1.0, npanel + 1)
        s = (0.5 * (edges[:-1] + edges[1:])[:, None]
             + 0.5 * (edges[1:] - edges[:-1])[:, None] * rule.nodes[None, :]).ravel()
        w = (0.5 * (edges[1:] - edges[:-1])[:, None]
             * rule.weights[None, :]).ravel()
        zeta = frame.variable(s)
        dzeta = frame.dvariable(s)
        powers = np.empty((kmax + 2, len(s)), dtype=complex)
        powers[0] = 1.0
        for k in range(1, kmax + 2):
            powers[k] = powers[k - 1] * zeta
        frame._quad_cache[key] = (zeta, w * dzeta, powers)
    return frame._quad_cache[key]


def cauchy_table_curved(frame: EdgeFrame, xe, kmax: int,
                        side=None, wa=None, wb=None) -> CauchyTable:
    """p_k, q_k along a curved edge in its own standardized frame.

    ``side`` (optional, per target): +1 if the target is believed interior
    to the owning element, -1 exterior; used only as a fallback hint for the
    branch-cut rotation.  ``wa``/``wb`` optionally supply the endpoint
    differences za - xe, zb - xe at full relative accuracy.
    """
    xe = np.atleast_1d(np.asarray(xe, dtype=complex))
    n = len(xe)
    if wa is None:
        wa = frame.za - xe
    if wb is None:
        wb = frame.zb - xe
    wa = np.atleast_1d(np.asarray(wa, dtype=complex))
    wb = np.atleast_1d(np.asarray(wb, dtype=complex))
    if side is None:
        chord = frame.zb - frame.za
        side = np.where(((xe - frame.za) / chord).imag > 0.0, 1, -1)
    side = np.atleast_1d(np.asarray(side))

    cut = _cut_directions(frame, xe, side)
    la = rotated_log(wa, cut)
    lb = rotated_log(wb, cut)
    # Anchor the branch at the principal value of log(za - x): the rotated
    # cut only serves to make the branch continuous along the curve; fixing
    # the constant makes the table agree with branch-tracking quadrature and
    # degenerate exactly to the straight table for a flat edge.
    shift = 2j * np.pi * np.round(((la - np.log(wa)) / (2j * np.pi)).real)
    la = la - shift
    lb = lb - shift

    va, vb = frame.za, frame.zb
    p = np.empty((kmax + 2, n), dtype=complex)
    p[0] = lb - la
    pa, pb = va, vb
    for k in range(1, kmax + 2):
        p[k] = xe * p[k - 1] + (pb - pa) / k
        pa = pa * va
        pb = pb * vb

    shell = np.abs(xe) > RECURRENCE_ZONE
    if shell.any():
        zeta, wdz, powers = _curved_quad_rule(frame, kmax)
        kernel = wdz[None, :] / (zeta[None, :] - xe[shell, None])
        p[:, shell] = powers @ kernel.T

    k = np.arange(kmax + 1)
    bpow = vb ** (k + 1)
    apow = va ** (k + 1)
    q = ((bpow[:, None] * lb[None, :] - apow[:, None] * la[None, :]
          - p[1:kmax + 2]) / (k + 1)[:, None])
    return CauchyTable(kmax=kmax, p=p, q=q, p0=p[0])


def edge_p0(frame: EdgeFrame, z_phys, side=None) -> np.ndarray:
    """The k = 0 Cauchy integral for arbitrary (also far) physical targets.

    Used by the winding indicator; far targets of curved edges take the
    radially-outward branch cut, which provably misses the curve.
    """
    xe, wa, wb = frame.target_data(np.atleast_1d(np.asarray(z_phys, dtype=complex)))
    if not frame.is_curved:
        return np.log(wb) - np.log(wa)
    out = np.empty(len(xe), dtype=complex)
    near = np.abs(xe) <= CLOSE_ZONE
    if near.any():
        s = None if side is None else np.atleast_1d(side)[near]
        out[near] = cauchy_table_curved(frame, xe[near], 0, side=s,
                                        wa=wa[near], wb=wb[near]).p0
    if (~near).any():
        x = xe[~near]
        cut = x / np.abs(x)
        out[~near] = rotated_log(wb[~near], cut) - rotated_log(wa[~near], cut)
    return out


# ---------------------------------------------------------------------------
# Layer potential assembly
# ---------------------------------------------------------------------------

def layer_potentials_close(phi_coef: np.ndarray, sigma_coef: np.ndarray,
                           table: CauchyTable, frame: EdgeFrame
                           ) -> tuple[np.ndarray, np.ndarray]:
    """(single, double) layer values at the table's targets.

    single = (1/2pi) Re[ scale * sum_k sigma_k (q_k + log(scale) m_k) ]
    double = Re[ (1/(2 pi i)) sum_k phi_k p_k ]

    where the log(scale) term restores the element-standardized logarithm
    from the edge-frame one.
    """
    kp = len(phi_coef) - 1
    ks = len(sigma_coef) - 1
    if max(kp, ks) > table.kmax:
        raise GeometryError("trace order exceeds the Cauchy table order")
    double = ((phi_coef[:kp + 1, None] * table.p[:kp + 1]).sum(axis=0)
              / (2j * np.pi)).real
    mk = frame.moments(ks)
    single_sum = (sigma_coef[:, None]
                  * (table.q[:ks + 1] + frame.log_offset * mk[:, None])).sum(axis=0)
    single = (frame.scale * single_sum).real / (2.0 * np.pi)
    return single, double


@dataclass
class FarEdgeRule:
    """Upsampled Gauss-Legendre data for one edge's far-field quadrature."""

    pos: np.ndarray      # element-standardized node positions
    arcw: np.ndarray     # arc-length weights (standardized units)
    normal: np.ndarray   # outward unit normals (complex)
    phi: np.ndarray      # anti-Laplacian values at the nodes
    dphidn: np.ndarray   # normal-derivative values at the nodes


def far_rule_geometry(frame: EdgeFrame, n_nodes: int
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(positions, arc weights, outward normals, params) of the far rule."""
    rule = gauss_legendre(n_nodes)
    s = 0.5 * (rule.nodes + 1.0)
    tangent = frame.unit_tangent(s)
    arcw = 0.5 * rule.weights * frame.arc_factor(s)
    return frame.position(s), arcw, -1j * tangent, s


def layer_potentials_far(rule: FarEdgeRule, z_std) -> tuple[np.ndarray, np.ndarray]:
    """(single, double) by plain quadrature at well-separated targets."""
    z = np.atleast_1d(np.asarray(z_std, dtype=complex))
    diff = rule.pos[:, None] - z[None, :]
    single = (rule.arcw * rule.dphidn) @ np.log(np.abs(diff)) / (2.0 * np.pi)
    double = (rule.arcw * rule.phi) @ (rule.normal[:, None] / diff).real / (2.0 * np.pi)
    return single, double
