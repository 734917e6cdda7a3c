"""Planar geometry: curved-edge triangles, bounding circles, meshes.

Points are complex numbers (x + iy).  Elements are triangles traversed
counterclockwise with at most one curved edge; curved edges are stored as
complex Chebyshev expansions of a parametrization gamma(s), s in [0, 1].
Every element carries its minimal enclosing ("bounding") circle, which
defines the local standardized frame used by all approximation machinery.

All types are immutable after construction and safe for shared read-only
concurrent access.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from numpy.polynomial import chebyshev as _cheb

from .errors import GeometryError, MeshFormatError

logger = logging.getLogger(__name__)

CURVED_EDGE_SAMPLES = 33          # bounding-circle sampling per curved edge
MAX_CHORD_DEVIATION = 0.5         # curvature guard: sagitta / chord length
ARC_FIT_DEGREE = 16
ARC_FIT_RESIDUAL = 1e-14

MESH_HEADER = "NEWTPOT-MESH v1"


def as_complex(x, y=None) -> np.ndarray:
    """Pack coordinates into complex points."""
    if y is None:
        arr = np.asarray(x, dtype=float)
        return arr[..., 0] + 1j * arr[..., 1]
    return np.asarray(x, dtype=float) + 1j * np.asarray(y, dtype=float)


# ---------------------------------------------------------------------------
# Minimal enclosing circle (Welzl-style randomized incremental)
# ---------------------------------------------------------------------------

def _circumcircle(a: complex, b: complex, c: complex) -> tuple[complex, float]:
    bb, cc = b - a, c - a
    d = 2.0 * (bb.real * cc.imag - bb.imag * cc.real)
    if abs(d) < 1e-300:
        raise GeometryError("collinear points have no circumcircle")
    ux = (cc.imag * abs(bb) ** 2 - bb.imag * abs(cc) ** 2) / d
    uy = (bb.real * abs(cc) ** 2 - cc.real * abs(bb) ** 2) / d
    center = a + complex(ux, uy)
    return center, abs(center - a)


def bounding_circle(points, seed: int = 0) -> tuple[complex, float]:
    """Minimal enclosing circle of a point set (expected linear time)."""
    pts = np.asarray(points, dtype=complex).ravel()
    if len(pts) == 0:
        raise GeometryError("empty point set")
    rng = np.random.default_rng(seed)
    pts = pts[rng.permutation(len(pts))]
    tol = 1.0 + 1e-12

    def c2(p, q):
        c = 0.5 * (p + q)
        return c, abs(p - c)

    c, r = pts[0], 0.0
    for i in range(1, len(pts)):
        if abs(pts[i] - c) <= r * tol + 1e-300:
            continue
        c, r = pts[i], 0.0
        for j in range(i):
            if abs(pts[j] - c) <= r * tol + 1e-300:
                continue
            c, r = c2(pts[i], pts[j])
            for k in range(j):
                if abs(pts[k] - c) <= r * tol + 1e-300:
                    continue
                try:
                    c, r = _circumcircle(pts[i], pts[j], pts[k])
                except GeometryError:
                    # Collinear support: fall back to the farthest pair.
                    trio = np.array([pts[i], pts[j], pts[k]])
                    d = np.abs(trio[:, None] - trio[None, :])
                    u, v = np.unravel_index(d.argmax(), d.shape)
                    c, r = c2(trio[u], trio[v])
    return c, r


# ---------------------------------------------------------------------------
# Edges
# ---------------------------------------------------------------------------

@dataclass
class Edge:
    """Directed edge from ``a`` to ``b``; curved edges carry Chebyshev data.

    ``cheb`` holds complex coefficients of gamma(s) in the basis
    T_k(2s - 1), s in [0, 1], with gamma(0) = a and gamma(1) = b.
    """

    a: complex
    b: complex
    cheb: Optional[np.ndarray] = None

    def __post_init__(self):
        scale = max(abs(self.a), abs(self.b), abs(self.b - self.a), 1e-30)
        if abs(self.b - self.a) <= 1e-14 * scale:
            raise GeometryError("degenerate edge: coincident endpoints")
        if self.cheb is not None:
            self.cheb = np.asarray(self.cheb, dtype=complex)
            g0 = _cheb.chebval(-1.0, self.cheb)
            g1 = _cheb.chebval(1.0, self.cheb)
            if abs(g0 - self.a) > 1e-13 * scale or abs(g1 - self.b) > 1e-13 * scale:
                raise GeometryError("curved edge endpoints do not match gamma(0), gamma(1)")
            dev = self.chord_deviation()
            if dev > MAX_CHORD_DEVIATION * abs(self.b - self.a):
                raise GeometryError(
                    f"curved edge deviates {dev:.3g} from its chord "
                    f"(limit {MAX_CHORD_DEVIATION} x chord length)")

    @property
    def is_curved(self) -> bool:
        return self.cheb is not None

    def point(self, s) -> np.ndarray:
        """gamma(s) for s in [0, 1] (vectorized)."""
        s = np.asarray(s, dtype=float)
        if self.cheb is None:
            return self.a + s * (self.b - self.a)
        return _cheb.chebval(2.0 * s - 1.0, self.cheb)

    def derivative(self, s) -> np.ndarray:
        """d gamma / d s (vectorized)."""
        s = np.asarray(s, dtype=float)
        if self.cheb is None:
            return np.full_like(s, self.b - self.a, dtype=complex)
        return _cheb.chebval(2.0 * s - 1.0, _cheb.chebder(self.cheb)) * 2.0

    def reversed(self) -> "Edge":
        if self.cheb is None:
            return Edge(self.b, self.a)
        flip = self.cheb * np.array([(-1.0) ** k for k in range(len(self.cheb))])
        return Edge(self.b, self.a, cheb=flip)

    def samples(self, n: int = CURVED_EDGE_SAMPLES) -> np.ndarray:
        return self.point(np.linspace(0.0, 1.0, n))

    def chord_deviation(self) -> float:
        if self.cheb is None:
            return 0.0
        s = np.linspace(0.0, 1.0, 129)
        g = self.point(s)
        chord = self.a + s * (self.b - self.a)
        return float(np.abs(g - chord).max())

    @staticmethod
    def straight(a: complex, b: complex) -> "Edge":
        return Edge(complex(a), complex(b))

    @staticmethod
    def circular_arc(center: complex, radius: float, theta0: float,
                     theta1: float, degree: int = ARC_FIT_DEGREE) -> "Edge":
        """Arc gamma(s) = center + radius exp(i(theta0 + s (theta1 - theta0))).

        Ingested as a Chebyshev expansion; the fit residual must be below
        1e-14 * radius.
        """
        t = np.cos(np.pi * (2 * np.arange(4 * degree) + 1) / (8 * degree))
        s = 0.5 * (t + 1.0)
        vals = center + radius * np.exp(1j * (theta0 + s * (theta1 - theta0)))
        coef = _cheb.chebfit(t, vals, degree)
        dense_t = np.linspace(-1.0, 1.0, 500)
        dense_s = 0.5 * (dense_t + 1.0)
        exact = center + radius * np.exp(1j * (theta0 + dense_s * (theta1 - theta0)))
        resid = np.abs(_cheb.chebval(dense_t, coef) - exact).max()
        if resid > ARC_FIT_RESIDUAL * abs(radius):
            raise GeometryError(f"arc Chebyshev fit residual {resid:.3g} too large")
        a = center + radius * np.exp(1j * theta0)
        b = center + radius * np.exp(1j * theta1)
        return Edge(a, b, cheb=coef)


# ---------------------------------------------------------------------------
# Blending map (reference simplex -> one-curved-side triangle)
# ---------------------------------------------------------------------------

def blending_map(xi, eta, curve: Edge, opposite: complex,
                 check_domain: bool = True) -> np.ndarray:
    """Map (xi, eta) in the reference simplex into the curved triangle.

    The curved side is ``curve`` (gamma over [0, 1]); ``opposite`` is the
    vertex facing it.  Corners map as (1,0) -> gamma(0), (0,0) -> gamma(1),
    (0,1) -> opposite.  The xi -> 1 limit of the (1-xi-eta)/(1-xi) factor is
    taken analytically.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if check_domain:
        bad = (xi < -1e-12) | (eta < -1e-12) | (xi + eta > 1.0 + 1e-12)
        if np.any(bad):
            raise GeometryError("blending map input outside the reference simplex")
    g0 = curve.point(0.0)
    g1 = curve.point(1.0)
    base = (1.0 - xi - eta) * g1 + xi * g0 + eta * opposite
    bracket = curve.point(1.0 - xi) - (1.0 - xi) * g1 - xi * g0
    denom = 1.0 - xi
    factor = np.where(denom < 1e-14, 1.0, (1.0 - xi - eta) / np.where(denom < 1e-14, 1.0, denom))
    return base + factor * bracket


def _blending_jacobian(xi, eta, curve: Edge, opposite: complex) -> np.ndarray:
    """|det J| of the blending map (analytic, clamped at the xi = 1 corner)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    g0 = curve.point(0.0)
    g1 = curve.point(1.0)
    delta = np.maximum(1.0 - xi, 1e-9)
    bval = curve.point(1.0 - xi) - (1.0 - xi) * g1 - xi * g0
    bder = -curve.derivative(1.0 - xi) + g1 - g0
    d_xi = (g0 - g1) + (-eta / delta**2) * bval + ((1.0 - xi - eta) / delta) * bder
    d_eta = (opposite - g1) - bval / delta
    det = d_xi.real * d_eta.imag - d_xi.imag * d_eta.real
    return np.abs(det)


def element_bounding_circle(edges: Sequence[Edge]) -> tuple[complex, float]:
    """Bounding circle defining an element's standardized frame.

    Plain triangles use the centroid-centered circle through the farthest
    vertex (the conventional frame for triangle experiments); curved
    elements, for which no convention exists, use the minimal enclosing
    circle of the vertices plus 33 samples per curved edge.  The choice
    only affects conditioning, never correctness.
    """
    verts = np.array([e.a for e in edges])
    if any(e.is_curved for e in edges):
        pts = list(verts)
        for e in edges:
            if e.is_curved:
                pts.extend(e.samples(CURVED_EDGE_SAMPLES))
        return bounding_circle(np.asarray(pts))
    cross = ((verts[1] - verts[0]).conjugate() * (verts[2] - verts[0])).imag
    if abs(cross) < 1e-14 * max(1e-300, abs(verts[1] - verts[0]) * abs(verts[2] - verts[0])):
        raise GeometryError("degenerate (collinear) vertices")
    c = verts.mean()
    return c, float(np.abs(verts - c).max())


# ---------------------------------------------------------------------------
# Elements
# ---------------------------------------------------------------------------

@dataclass
class MeshElement:
    """Straight or one-curved-side triangle, counterclockwise edges."""

    index: int
    edges: tuple[Edge, Edge, Edge]
    center: complex = 0.0 + 0.0j
    radius: float = 0.0
    shared_edges: tuple[int, int, int] = (-1, -1, -1)

    def __post_init__(self):
        scale = max(abs(e.b - e.a) for e in self.edges)
        for i in range(3):
            if abs(self.edges[i].b - self.edges[(i + 1) % 3].a) > 1e-12 * scale:
                raise GeometryError(f"element {self.index}: edges do not close")
        n_curved = sum(e.is_curved for e in self.edges)
        if n_curved > 1:
            raise GeometryError(f"element {self.index}: more than one curved edge")
        if self.radius == 0.0:
            self.center, self.radius = element_bounding_circle(self.edges)
        if self.signed_area() <= 0.0:
            raise GeometryError(f"element {self.index}: not counterclockwise")

    @property
    def vertices(self) -> tuple[complex, complex, complex]:
        return (self.edges[0].a, self.edges[1].a, self.edges[2].a)

    @property
    def is_curved(self) -> bool:
        return any(e.is_curved for e in self.edges)

    @property
    def curved_index(self) -> int:
        for i, e in enumerate(self.edges):
            if e.is_curved:
                return i
        return -1

    def signed_area(self) -> float:
        """(1/2) Im contour integral of conj(z) dz, by Gauss-Legendre."""
        t, w = np.polynomial.legendre.leggauss(24)
        s = 0.5 * (t + 1.0)
        total = 0.0
        for e in self.edges:
            z = e.point(s)
            dz = e.derivative(s) * 0.5
            total += (w * (np.conj(z) * dz).imag).sum()
        return 0.5 * total

    # -- reference-simplex chart (used for node placement and integration) --

    def _chart(self) -> tuple[Edge, complex]:
        k = self.curved_index
        e = self.edges[k] if k >= 0 else self.edges[0]
        opp = self.edges[(max(k, 0) + 2) % 3].a
        return e, opp

    def map_reference(self, xi, eta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(x, y, |J|) of the blending chart at reference points."""
        curve, opp = self._chart()
        z = blending_map(xi, eta, curve, opp, check_domain=False)
        jac = _blending_jacobian(xi, eta, curve, opp)
        return np.asarray(z).real, np.asarray(z).imag, jac

    def map_reference_points(self, xi, eta) -> np.ndarray:
        x, y, _ = self.map_reference(xi, eta)
        return x + 1j * y


def winding_indicator(p0_sum: complex) -> bool:
    """Classify inside/outside from the boundary Cauchy integral sum.

    ``p0_sum`` is the sum over the three edges of the integral of
    dz / (z - x); the winding number is Re(p0_sum / (2 pi i)).
    """
    w = (p0_sum / (2j * np.pi)).real
    r = round(w)
    if abs(w - r) > 0.1 or r not in (0, 1):
        raise GeometryError(
            f"target too close to boundary for classification (winding {w:.3f})")
    return r == 1


# ---------------------------------------------------------------------------
# Mesh container
# ---------------------------------------------------------------------------

@dataclass
class Mesh:
    """Shared vertex/edge tables plus per-element views.

    ``elements[i].shared_edges`` holds indices into ``edges`` so that
    interior-edge bookkeeping (adjacency, source merging) survives the
    per-element edge orientation.
    """

    vertices: np.ndarray
    edges: list[Edge]
    elements: list[MeshElement]
    edge_owners: list[list[int]] = field(default_factory=list)
    adjacency: list[set[int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.edge_owners:
            owners = [[] for _ in self.edges]
            for el in self.elements:
                for eid in el.shared_edges:
                    if eid >= 0:
                        owners[eid].append(el.index)
            self.edge_owners = owners
        for eid, owners in enumerate(self.edge_owners):
            if len(owners) > 2:
                raise MeshFormatError(f"edge {eid} shared by {len(owners)} elements")
        if not self.adjacency:
            adj = [set() for _ in self.elements]
            vert_map: dict[int, set[int]] = {}
            for el in self.elements:
                for v in el.vertices:
                    key = self._vertex_key(v)
                    vert_map.setdefault(key, set()).add(el.index)
            for group in vert_map.values():
                for i in group:
                    adj[i] |= group - {i}
            for owners in self.edge_owners:
                for i in owners:
                    adj[i] |= set(owners) - {i}
            self.adjacency = adj
        for i, nbrs in enumerate(self.adjacency):
            for j in nbrs:
                if i not in self.adjacency[j]:
                    raise MeshFormatError("asymmetric adjacency")

    def _vertex_key(self, v: complex) -> int:
        d = np.abs(self.vertices - v)
        k = int(d.argmin())
        if d[k] > 1e-10 * max(1.0, abs(v)):
            raise MeshFormatError("element vertex missing from vertex table")
        return k

    def __len__(self) -> int:
        return len(self.elements)


def build_mesh(vertices, edge_records, triangle_records) -> Mesh:
    """Assemble a Mesh from shared tables.

    ``edge_records``: list of Edge (directed as stored).
    ``triangle_records``: triples of signed 1-based edge references; a
    negative reference traverses the stored edge in reverse.  Each triangle
    must come out counterclockwise.
    """
    vertices = np.asarray(vertices, dtype=complex)
    elements = []
    for ti, refs in enumerate(triangle_records):
        directed = []
        shared = []
        for r in refs:
            eid = abs(r) - 1
            if not 0 <= eid < len(edge_records):
                raise MeshFormatError(f"triangle {ti}: edge reference {r} out of range")
            e = edge_records[eid]
            directed.append(e if r > 0 else e.reversed())
            shared.append(eid)
        elements.append(MeshElement(index=ti, edges=tuple(directed),
                                    shared_edges=tuple(shared)))
    return Mesh(vertices=vertices, edges=list(edge_records), elements=elements)


# ---------------------------------------------------------------------------
# Mesh file format (text, line oriented)
# ---------------------------------------------------------------------------

def save_mesh(mesh: Mesh, path) -> None:
    """Write the line-oriented text format (see README for the grammar)."""
    lines = [MESH_HEADER, f"V {len(mesh.vertices)}"]
    for v in mesh.vertices:
        lines.append(f"{v.real:.17g} {v.imag:.17g}")
    lines.append(f"E {len(mesh.edges)}")
    vlist = mesh.vertices

    def vid(p: complex) -> int:
        k = int(np.abs(vlist - p).argmin())
        return k

    for e in mesh.edges:
        i, j = vid(e.a), vid(e.b)
        if e.cheb is None:
            lines.append(f"straight {i} {j}")
        else:
            coefs = " ".join(f"{c.real:.17g} {c.imag:.17g}" for c in e.cheb)
            lines.append(f"curved {i} {j} 0 {len(e.cheb) - 1} {coefs}")
    lines.append(f"T {len(mesh.elements)}")
    for el in mesh.elements:
        refs = []
        for k, eid in enumerate(el.shared_edges):
            stored = mesh.edges[eid]
            sign = 1 if abs(stored.a - el.edges[k].a) <= abs(stored.b - el.edges[k].a) else -1
            refs.append(sign * (eid + 1))
        lines.append(" ".join(str(r) for r in refs))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    if not raw or raw[0] != MESH_HEADER:
        raise MeshFormatError(f"missing '{MESH_HEADER}' header")
    pos = 1

    def expect(tag: str) -> int:
        nonlocal pos
        parts = raw[pos].split()
        if len(parts) != 2 or parts[0] != tag:
            raise MeshFormatError(f"expected '{tag} <count>' at line {pos + 1}")
        pos += 1
        return int(parts[1])

    try:
        nv = expect("V")
        verts = np.empty(nv, dtype=complex)
        for i in range(nv):
            x, y = map(float, raw[pos].split())
            verts[i] = complex(x, y)
            pos += 1
        ne = expect("E")
        edges = []
        for _ in range(ne):
            parts = raw[pos].split()
            pos += 1
            if parts[0] == "straight":
                i, j = int(parts[1]), int(parts[2])
                edges.append(Edge.straight(verts[i], verts[j]))
            elif parts[0] == "curved":
                i, j = int(parts[1]), int(parts[2])
                # parts[3] is a reserved record flag (always 0 for now)
                deg = int(parts[4])
                flat = list(map(float, parts[5:5 + 2 * (deg + 1)]))
                if len(flat) != 2 * (deg + 1):
                    raise MeshFormatError("curved edge: coefficient count mismatch")
                cheb = np.asarray(flat[0::2]) + 1j * np.asarray(flat[1::2])
                edges.append(Edge(verts[i], verts[j], cheb=cheb))
            else:
                raise MeshFormatError(f"unknown edge kind '{parts[0]}'")
        nt = expect("T")
        tris = []
        for _ in range(nt):
            tris.append([int(tok) for tok in raw[pos].split()])
            pos += 1
    except (ValueError, IndexError) as exc:
        raise MeshFormatError(f"malformed mesh file near line {pos + 1}: {exc}") from exc
    return build_mesh(verts, edges, tris)


# ---------------------------------------------------------------------------
# Mesh builders for common test geometries
# ---------------------------------------------------------------------------

def triangle_mesh(v0: complex, v1: complex, v2: complex) -> Mesh:
    """Single-element mesh; vertices reordered counterclockwise if needed."""
    cross = ((v1 - v0).conjugate() * (v2 - v0)).imag
    if abs(cross) < 1e-14 * max(abs(v1 - v0), abs(v2 - v0)) ** 2:
        raise GeometryError("degenerate (collinear) triangle")
    if cross < 0:
        v1, v2 = v2, v1
    edges = [Edge.straight(v0, v1), Edge.straight(v1, v2), Edge.straight(v2, v0)]
    return build_mesh([v0, v1, v2], edges, [[1, 2, 3]])


def square_mesh(n: int, lo: complex = 0.0 + 0.0j, hi: complex = 1.0 + 1.0j) -> Mesh:
    """n x n cells on a rectangle, two triangles per cell."""
    xs = np.linspace(lo.real, hi.real, n + 1)
    ys = np.linspace(lo.imag, hi.imag, n + 1)
    verts = np.array([complex(x, y) for y in ys for x in xs])

    def vid(i, j):
        return j * (n + 1) + i

    edge_index: dict[tuple[int, int], int] = {}
    edges: list[Edge] = []

    def get_edge(u, v):
        key = (min(u, v), max(u, v))
        if key not in edge_index:
            edge_index[key] = len(edges)
            edges.append(Edge.straight(verts[key[0]], verts[key[1]]))
        eid = edge_index[key]
        sign = 1 if (u, v) == (min(u, v), max(u, v)) else -1
        return sign * (eid + 1)

    tris = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris.append([get_edge(a, b), get_edge(b, c), get_edge(c, a)])
            tris.append([get_edge(a, c), get_edge(c, d), get_edge(d, a)])
    return build_mesh(verts, edges, tris)


def quarter_disk_mesh(radius: float = 1.0, rotation: float = 0.0,
                      center: complex = 0.0 + 0.0j) -> Mesh:
    """One curved element: a quarter disk spanning 90 degrees of arc."""
    a = center + radius * np.exp(1j * rotation)
    b = center + radius * np.exp(1j * (rotation + np.pi / 2))
    edges = [
        Edge.straight(center, a),
        Edge.circular_arc(center, radius, rotation, rotation + np.pi / 2),
        Edge.straight(b, center),
    ]
    return build_mesh([center, a, b], edges, [[1, 2, 3]])


def unit_disk_mesh(radius: float = 1.0) -> Mesh:
    """Four curved quarter-disk elements tiling the disk."""
    c = 0.0 + 0.0j
    ring = [c + radius * np.exp(1j * (k * np.pi / 2)) for k in range(4)]
    verts = [c] + ring
    edges: list[Edge] = []
    spokes = []
    for k in range(4):
        spokes.append(len(edges))
        edges.append(Edge.straight(c, ring[k]))
    arcs = []
    for k in range(4):
        arcs.append(len(edges))
        edges.append(Edge.circular_arc(c, radius, k * np.pi / 2, (k + 1) * np.pi / 2))
    tris = []
    for k in range(4):
        tris.append([spokes[k] + 1, arcs[k] + 1, -(spokes[(k + 1) % 4] + 1)])
    return build_mesh(verts, edges, tris)
