"""Far-field summation over boundary sources: direct and treecode backends.

Sources carry a monopole (log) charge and a complex dipole strength; the
potential of one source at target x is

    charge * log|x - s| / (2 pi) + Re[ dipole / (2 pi (x - s)) ].

The treecode aggregates sources into complex multipole expansions per
quadtree box (monopole total plus p inverse-power coefficients) and
evaluates box expansions directly at well-separated target leaves; local
expansions are deliberately not used.  Near/self interactions are excluded
at the interaction-list level, never by subtract-and-add: a box whose
owners intersect a target leaf's excluded elements is refused for multipole
evaluation and recursed into, so excluded owners are only ever touched in
the point-to-point stage, where they are filtered per target.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NewtpotError

logger = logging.getLogger(__name__)

DEFAULT_ORDER = 30
DEFAULT_LEAF = 64
MAC_RATIO = 0.5          # source box radius / distance acceptance threshold
MIN_TREE_ORDER = 10


@dataclass
class SourceSet:
    """Boundary quadrature sources for the far-field engine.

    ``groups``/``parts`` are set on merged sets only: ``parts`` retains the
    original unmerged sources and ``groups[k]`` lists the original indices
    folded into merged source k (needed for exact per-owner filtering).
    """

    pos: np.ndarray      # complex positions
    charge: np.ndarray   # real monopole weights
    dipole: np.ndarray   # complex dipole strengths
    owner: np.ndarray    # owning element index per source
    parts: Optional["SourceSet"] = None
    groups: Optional[list] = None

    def __post_init__(self):
        n = len(self.pos)
        if not (len(self.charge) == len(self.dipole) == len(self.owner) == n):
            raise NewtpotError("source array length mismatch")

    def __len__(self) -> int:
        return len(self.pos)

    def owner_sets(self) -> list[frozenset]:
        if self.groups is None:
            return [frozenset((int(o),)) for o in self.owner]
        orig = self.parts.owner
        return [frozenset(int(orig[i]) for i in g) for g in self.groups]


def _exclusion_sets(exclusion, indices) -> list[frozenset]:
    if exclusion is None:
        return [frozenset()] * len(indices)
    return [frozenset(exclusion[i]) if exclusion[i] is not None else frozenset()
            for i in indices]


def _filtered_block(pos, charge, dipole, owner, targets,
                    excl_sets) -> np.ndarray:
    """Dense kernel sums with per-target owner exclusion.

    Targets sharing an exclusion set are masked as one group, which is the
    common case (all collocation targets of one element exclude the same
    near list).
    """
    out = np.empty(len(targets))
    order = {}
    for i, ex in enumerate(excl_sets):
        order.setdefault(ex, []).append(i)
    for ex, idx in order.items():
        idx = np.asarray(idx)
        sel = ~np.isin(owner, list(ex)) if ex else slice(None)
        p = pos[sel]
        diff = targets[idx][:, None] - p[None, :]
        if np.any(diff == 0):
            raise NewtpotError("target coincides with an included source")
        out[idx] = (np.log(np.abs(diff)) @ charge[sel]
                    + ((dipole[sel][None, :] / diff).real).sum(axis=1)
                    ) / (2.0 * np.pi)
    return out


def direct_sum(sources: SourceSet, targets, exclusion=None,
               chunk: int = 512) -> np.ndarray:
    """Reference O(M T) summation with per-target owner exclusion."""
    t = np.atleast_1d(np.asarray(targets, dtype=complex))
    out = np.zeros(len(t))
    if len(sources) == 0 or len(t) == 0:
        return out
    src = sources.parts if sources.parts is not None else sources
    for lo in range(0, len(t), chunk):
        hi = min(lo + chunk, len(t))
        excl = _exclusion_sets(exclusion, range(lo, hi))
        out[lo:hi] = _filtered_block(src.pos, src.charge, src.dipole,
                                     src.owner, t[lo:hi], excl)
    return out


def merge_shared_sources(sources: SourceSet, tol: float = 1e-12) -> SourceSet:
    """Merge coincident sources from shared edges (position quantization).

    Adjacent elements collocate the same Gauss-Legendre nodes on a common
    edge; merging halves the multipole work there.  The original set is
    retained so near-field filtering stays exact per owner.
    """
    if len(sources) == 0 or sources.parts is not None:
        return sources
    scale = max(np.abs(sources.pos).max(), 1.0)
    key = np.round(sources.pos.real / (tol * scale)) \
        + 1j * np.round(sources.pos.imag / (tol * scale))
    uniq, inverse = np.unique(key, return_inverse=True)
    n = len(uniq)
    pos = np.zeros(n, dtype=complex)
    charge = np.zeros(n)
    dipole = np.zeros(n, dtype=complex)
    groups: list[list[int]] = [[] for _ in range(n)]
    pos[inverse] = sources.pos  # representative position per merged source
    np.add.at(charge, inverse, sources.charge)
    np.add.at(dipole, inverse, sources.dipole)
    for i, g in enumerate(inverse):
        groups[g].append(i)
    owner = np.array([int(sources.owner[g[0]]) for g in groups])
    logger.info("merged %d sources into %d", len(sources), n)
    return SourceSet(pos=pos, charge=charge, dipole=dipole, owner=owner,
                     parts=sources, groups=[np.asarray(g) for g in groups])


# ---------------------------------------------------------------------------
# Quadtree
# ---------------------------------------------------------------------------

@dataclass
class _Box:
    center: complex
    half: float
    start: int
    end: int
    children: list = field(default_factory=list)
    owners: frozenset = frozenset()
    mp_log: float = 0.0
    mp: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.end - self.start


class QuadTree:
    """Array-backed quadtree; points are permuted into box order."""

    def __init__(self, points: np.ndarray, leaf_cap: int,
                 bounds: Optional[tuple[complex, float]] = None):
        self.points = np.array(points, dtype=complex)
        self.order = np.arange(len(self.points))
        if bounds is None:
            if len(self.points) == 0:
                bounds = (0.0j, 1.0)
            else:
                lo = complex(self.points.real.min(), self.points.imag.min())
                hi = complex(self.points.real.max(), self.points.imag.max())
                bounds = (0.5 * (lo + hi),
                          max(hi.real - lo.real, hi.imag - lo.imag) * 0.5 + 1e-12)
        self.boxes: list[_Box] = []
        self._build(bounds[0], bounds[1], 0, len(self.points), leaf_cap, 0)

    def _build(self, center, half, start, end, leaf_cap, depth) -> int:
        box = _Box(center=center, half=half, start=start, end=end)
        idx = len(self.boxes)
        self.boxes.append(box)
        if end - start <= leaf_cap or depth > 48 or half < 1e-14:
            return idx
        pts = self.points[start:end]
        quadrant = ((pts.real > center.real).astype(int)
                    + 2 * (pts.imag > center.imag).astype(int))
        perm = np.argsort(quadrant, kind="stable")
        self.points[start:end] = pts[perm]
        self.order[start:end] = self.order[start:end][perm]
        counts = np.bincount(quadrant, minlength=4)
        offs = np.concatenate([[0], np.cumsum(counts)])
        for qd in range(4):
            if counts[qd] == 0:
                continue
            cc = center + 0.5 * half * complex(1.0 if qd & 1 else -1.0,
                                               1.0 if qd & 2 else -1.0)
            ci = self._build(cc, 0.5 * half, start + int(offs[qd]),
                             start + int(offs[qd + 1]), leaf_cap, depth + 1)
            box.children.append(ci)
        return idx

    def leaves(self):
        return [b for b in self.boxes if not b.children and b.size > 0]


# ---------------------------------------------------------------------------
# Treecode
# ---------------------------------------------------------------------------

def _binomials(p: int) -> np.ndarray:
    c = np.zeros((p + 1, p + 1))
    c[:, 0] = 1.0
    for i in range(1, p + 1):
        for j in range(1, i + 1):
            c[i, j] = c[i - 1, j - 1] + c[i - 1, j]
    return c


def tree_sum(sources: SourceSet, targets, exclusion=None,
             p: int = DEFAULT_ORDER, leaf_cap: int = DEFAULT_LEAF) -> np.ndarray:
    """Treecode-accelerated summation, equivalent to direct_sum.

    With the default MAC (acceptance at radius/distance <= 1/2) the
    multipole truncation error is of order 2^-p of the local source
    strength.  ``exclusion`` is an optional per-target iterable of excluded
    element ids; excluded near elements are expected to be geometrically
    near the target, but correctness does not depend on it.
    """
    if p < MIN_TREE_ORDER:
        raise NewtpotError(f"multipole order must be >= {MIN_TREE_ORDER}")
    t = np.atleast_1d(np.asarray(targets, dtype=complex))
    out = np.zeros(len(t))
    if len(sources) == 0 or len(t) == 0:
        return out

    allpts = np.concatenate([sources.pos, t])
    lo = complex(allpts.real.min(), allpts.imag.min())
    hi = complex(allpts.real.max(), allpts.imag.max())
    bounds = (0.5 * (lo + hi),
              max(hi.real - lo.real, hi.imag - lo.imag) * 0.5 + 1e-12)

    stree = QuadTree(sources.pos, leaf_cap, bounds)
    sperm = stree.order
    s_pos = stree.points
    s_charge = sources.charge[sperm]
    s_dipole = sources.dipole[sperm]
    all_owner_sets = sources.owner_sets()
    s_ownersets = [all_owner_sets[i] for i in sperm]

    ttree = QuadTree(t, leaf_cap, bounds)
    tperm = ttree.order

    # Upward pass: P2M on leaves, M2M on internal boxes.
    binom = _binomials(p)
    for box in reversed(stree.boxes):
        box.mp = np.zeros(p + 1, dtype=complex)
        if box.size == 0:
            continue
        if not box.children:
            sl = slice(box.start, box.end)
            d = s_pos[sl] - box.center
            box.mp_log = float(s_charge[sl].sum())
            dpow = np.ones(box.size, dtype=complex)
            for j in range(1, p + 1):
                box.mp[j] += (s_dipole[sl] * dpow).sum()
                dpow = dpow * d
                box.mp[j] -= (s_charge[sl] * dpow).sum() / j
            box.owners = frozenset().union(*s_ownersets[box.start:box.end])
        else:
            owners = set()
            for ci in box.children:
                ch = stree.boxes[ci]
                if ch.size == 0:
                    continue
                owners |= ch.owners
                box.mp_log += ch.mp_log
                d = ch.center - box.center
                dpow = np.concatenate([[1.0 + 0.0j], np.cumprod(np.full(p, d))])
                for k in range(1, p + 1):
                    acc = -ch.mp_log * dpow[k] / k
                    for j in range(1, k + 1):
                        acc += ch.mp[j] * binom[k - 1][j - 1] * dpow[k - j]
                    box.mp[k] += acc
            box.owners = frozenset(owners)

    # Flatten the multipole data for fast per-leaf gathering.
    nb = len(stree.boxes)
    all_centers = np.array([b.center for b in stree.boxes])
    all_logs = np.array([b.mp_log for b in stree.boxes])
    all_mp = np.stack([b.mp for b in stree.boxes])  # (nb, p+1)
    s_owner_perm = sources.owner[sperm]

    # Target-leaf-driven walk.
    for leaf in ttree.leaves():
        tl = slice(leaf.start, leaf.end)
        pts = ttree.points[tl]
        tidx = tperm[tl]
        excl_sets = _exclusion_sets(exclusion, tidx)
        leaf_excl = frozenset().union(*excl_sets)
        t_rad = leaf.half * math.sqrt(2.0)

        far_idx, p2p_ranges = [], []
        stack = [0]
        while stack:
            bi = stack.pop()
            box = stree.boxes[bi]
            if box.size == 0:
                continue
            s_rad = box.half * math.sqrt(2.0)
            dist = abs(box.center - leaf.center) - t_rad
            if dist > 0 and s_rad / dist <= MAC_RATIO \
                    and not (box.owners & leaf_excl):
                far_idx.append(bi)
            elif not box.children:
                p2p_ranges.append((box.start, box.end))
            else:
                stack.extend(box.children)

        vals = np.zeros(leaf.size)
        if far_idx:
            centers = all_centers[far_idx]
            logs = all_logs[far_idx]
            coefs = all_mp[far_idx]                          # (nf, p+1)
            w = 1.0 / (pts[:, None] - centers[None, :])      # (nt, nf)
            acc = np.zeros_like(w)
            for j in range(p, 0, -1):
                acc = (acc + coefs[:, j][None, :]) * w
            vals += (acc.real.sum(axis=1)
                     - np.log(np.abs(w)) @ logs) / (2.0 * np.pi)
        if p2p_ranges:
            sel = np.concatenate([np.arange(lo, hi) for lo, hi in p2p_ranges])
            if sources.groups is not None:
                # Merged sources may mix excluded and kept owners: always
                # fall back to the unmerged originals for direct work.
                orig_idx = np.concatenate([sources.groups[g] for g in sperm[sel]])
                src = sources.parts
                vals += _filtered_block(src.pos[orig_idx], src.charge[orig_idx],
                                        src.dipole[orig_idx], src.owner[orig_idx],
                                        pts, excl_sets)
            else:
                vals += _filtered_block(s_pos[sel], s_charge[sel], s_dipole[sel],
                                        s_owner_perm[sel], pts, excl_sets)
        out[tidx] = vals
    return out
