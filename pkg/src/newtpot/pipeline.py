"""Mesh-level evaluation pipeline: configs, target sets, near lists, runs.

This is the glue consumed by the command-line driver: it loads a mesh,
precomputes every element's tables, classifies each target's near list
(elements whose close-evaluation zone contains the target, plus bounding
circle hits), computes the far field with the summation engine under
near-list exclusion, and evaluates near/self contributions with the
close-evaluation machinery.  Timings are reported per stage (T_geom,
T_init, T_F, T_N, T_S, T_tot).
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import geom
from .element import (ElementTables, element_far_sources, evaluate_element,
                      precompute_element)
from .antilap import build_anti_laplacian_map
from .errors import NewtpotError, OnBoundaryError
from .fastsum import SourceSet, direct_sum, merge_shared_sources, tree_sum
from .koornwinder import koornwinder_basis, koornwinder_fit
from .quadrule import adaptive_triangle_integrate, tri_nodes

logger = logging.getLogger(__name__)

BUILTIN_DENSITIES = {
    "gauss": lambda x, y: np.exp(-np.asarray(x) ** 2 - np.asarray(y) ** 2),
    "sin56": lambda x, y: np.sin(5.0 * np.asarray(x) + 6.0 * np.asarray(y)),
    "const": lambda x, y: np.ones_like(np.asarray(x, dtype=float)),
}


@dataclass
class RunConfig:
    """Validated, hashable description of one pipeline run."""

    mesh: str
    density: str = "gauss"
    order: int = 12
    solver: str = "plu"
    backend: str = "tree"
    targets: str = "nodes:12"
    out: Optional[str] = None
    seed: int = 0
    merge_edges: bool = False

    def validate(self) -> None:
        if self.solver not in ("plu", "tsvd"):
            raise NewtpotError(f"unknown solver '{self.solver}'")
        if self.backend not in ("direct", "tree"):
            raise NewtpotError(f"unknown backend '{self.backend}'")
        if not 1 <= self.order <= 20:
            raise NewtpotError("order must be in [1, 20]")
        density_function(self.density)  # raises on bad spec

    def config_hash(self) -> str:
        payload = asdict(self)
        payload.pop("out")  # output location has no numerical effect
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def density_function(spec: str) -> Callable:
    """Resolve a density spec: builtin name or ``samples:<path>``.

    Tabulated densities (``samples:<path>``) carry one value per collocation
    node in element-major order and are bound later by the run driver.
    """
    if spec in BUILTIN_DENSITIES:
        return BUILTIN_DENSITIES[spec]
    if spec.startswith("samples:"):
        return None  # resolved per element inside run_evaluate
    raise NewtpotError(f"unknown density spec '{spec}'")


def make_targets(spec: str, mesh: geom.Mesh) -> np.ndarray:
    """Build the complex target array from a target spec string.

    Forms: ``nodes:<order>`` (interpolation nodes mapped to every element),
    ``grid:<nx>,<ny>[,<xmin>,<xmax>,<ymin>,<ymax>]``, ``file:<path>`` (CSV
    with x,y columns), ``probes:<x0>,<y0>,<dx>,<dy>,<h1>,<h2>,...``.
    """
    kind, _, rest = spec.partition(":")
    if kind == "nodes":
        order = int(rest)
        ns = tri_nodes(order)
        pts = [el.map_reference_points(ns.points[:, 0], ns.points[:, 1])
               for el in mesh.elements]
        return np.concatenate(pts) if pts else np.array([], dtype=complex)
    if kind == "grid":
        vals = [float(v) for v in rest.split(",")]
        nx, ny = int(vals[0]), int(vals[1])
        if len(vals) >= 6:
            x0, x1, y0, y1 = vals[2:6]
        else:
            vs = np.concatenate([[el.center] for el in mesh.elements])
            rs = max(el.radius for el in mesh.elements)
            x0, x1 = vs.real.min() - rs, vs.real.max() + rs
            y0, y1 = vs.imag.min() - rs, vs.imag.max() + rs
        gx = np.linspace(x0, x1, nx)
        gy = np.linspace(y0, y1, ny)
        xx, yy = np.meshgrid(gx, gy, indexing="ij")
        return (xx + 1j * yy).ravel()
    if kind == "file":
        rows = []
        with open(rest) as fh:
            for ln in fh:
                ln = ln.strip()
                if not ln or ln.startswith("#"):
                    continue
                parts = ln.replace(",", " ").split()
                try:
                    rows.append(complex(float(parts[0]), float(parts[1])))
                except (ValueError, IndexError):
                    continue  # header or malformed line
        return np.asarray(rows, dtype=complex)
    if kind == "probes":
        vals = [float(v) for v in rest.split(",")]
        if len(vals) < 5:
            raise NewtpotError("probes spec needs x0,y0,dx,dy,h1[,h2,...]")
        x0, y0, dx, dy = vals[:4]
        hs = np.asarray(vals[4:])
        return (x0 + hs * dx) + 1j * (y0 + hs * dy)
    raise NewtpotError(f"unknown target spec '{spec}'")


# ---------------------------------------------------------------------------
# Precompute and near-list classification
# ---------------------------------------------------------------------------

def precompute_mesh(mesh: geom.Mesh, density: Callable, order: int,
                    solver: str = "plu", seed: int = 0,
                    convention: str = "x2") -> list[ElementTables]:
    almap = build_anti_laplacian_map(order, convention)
    return [precompute_element(el, density, order, solver=solver, seed=seed,
                               almap=almap) for el in mesh.elements]


def classify_near(tabs: Sequence[ElementTables], targets: np.ndarray
                  ) -> list[np.ndarray]:
    """Per-target element ids whose close zone or bounding circle hits it."""
    if len(targets) == 0:
        return []
    centers, radii, owners = [], [], []
    for t in tabs:
        for c, r in t.zone_disks():
            centers.append(c)
            radii.append(r)
            owners.append(t.element.index)
        centers.append(t.center)
        radii.append(t.radius)
        owners.append(t.element.index)
    centers = np.asarray(centers)
    radii = np.asarray(radii)
    owners = np.asarray(owners)
    tree = cKDTree(np.column_stack([centers.real, centers.imag]))
    rmax = radii.max()
    txy = np.column_stack([targets.real, targets.imag])
    hits = tree.query_ball_point(txy, r=rmax)
    near = []
    for i, cand in enumerate(hits):
        cand = np.asarray(cand, dtype=int)
        if len(cand) == 0:
            near.append(np.array([], dtype=int))
            continue
        ok = np.abs(targets[i] - centers[cand]) <= radii[cand]
        near.append(np.unique(owners[cand[ok]]))
    return near


def _nudge_boundary_targets(tabs, targets, near_lists) -> tuple[np.ndarray, int]:
    """Shift targets off element boundaries by 1e-12 R (toward the centroid)."""
    z = targets.copy()
    moved = np.zeros(len(z), dtype=bool)
    batches: dict[int, list[int]] = {}
    for i, nl in enumerate(near_lists):
        for e in nl:
            batches.setdefault(int(e), []).append(i)
    for e, idx in batches.items():
        t = tabs[e]
        idx = np.asarray(idx)
        std = (z[idx] - t.center) / t.radius
        d = np.min([fr.distance(std) for fr in t.frames], axis=0)
        hit = (d < 1e-11) & ~moved[idx]
        if hit.any():
            centroid = np.mean(t.element.vertices)
            direction = centroid - z[idx[hit]]
            direction /= np.abs(direction)
            z[idx[hit]] += 1e-12 * t.radius * direction
            moved[idx[hit]] = True
    n_moved = int(moved.sum())
    if n_moved:
        logger.info("nudged %d boundary target(s) by 1e-12 R inward", n_moved)
    return z, n_moved


# ---------------------------------------------------------------------------
# Full evaluation run
# ---------------------------------------------------------------------------

@dataclass
class EvaluateResult:
    targets: np.ndarray
    values: np.ndarray
    inside_element: np.ndarray     # containing element id or -1
    n_near: np.ndarray
    nudged: np.ndarray
    timings: dict
    config_hash: str = ""


def _samples_density(path: str, mesh: geom.Mesh, order: int) -> Callable:
    """Tabulated density: one value per collocation node, element-major."""
    vals = np.loadtxt(path, ndmin=1)
    ns = tri_nodes(order)
    want = len(mesh.elements) * len(ns)
    if vals.shape != (want,):
        raise NewtpotError(
            f"samples file holds {vals.shape[0]} values, expected {want} "
            f"({len(mesh.elements)} elements x {len(ns)} nodes)")
    table = {}
    for k, el in enumerate(mesh.elements):
        pts = el.map_reference_points(ns.points[:, 0], ns.points[:, 1])
        for z, v in zip(pts, vals[k * len(ns):(k + 1) * len(ns)]):
            table[(round(z.real, 12), round(z.imag, 12))] = v

    def density(x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty(len(x))
        for i in range(len(x)):
            key = (round(x[i], 12), round(y[i], 12))
            if key not in table:
                raise NewtpotError("tabulated density queried off its nodes")
            out[i] = table[key]
        return out

    return density


def run_evaluate(cfg: RunConfig, mesh: Optional[geom.Mesh] = None
                 ) -> EvaluateResult:
    cfg.validate()
    t_all = time.perf_counter()
    if mesh is None:
        mesh = geom.load_mesh(cfg.mesh)

    if cfg.density.startswith("samples:"):
        density = _samples_density(cfg.density.split(":", 1)[1], mesh, cfg.order)
    else:
        density = density_function(cfg.density)

    t0 = time.perf_counter()
    tabs = precompute_mesh(mesh, density, cfg.order, solver=cfg.solver,
                           seed=cfg.seed)
    t_init = time.perf_counter() - t0

    targets = make_targets(cfg.targets, mesh)
    if len(targets) == 0:
        timings = {"T_geom": 0.0, "T_init": t_init, "T_F": 0.0, "T_N": 0.0,
                   "T_S": 0.0, "T_tot": time.perf_counter() - t_all}
        return EvaluateResult(targets=targets, values=np.array([]),
                              inside_element=np.array([], dtype=int),
                              n_near=np.array([], dtype=int),
                              nudged=np.array([], dtype=bool),
                              timings=timings, config_hash=cfg.config_hash())

    t0 = time.perf_counter()
    near = classify_near(tabs, targets)
    z_eval, _ = _nudge_boundary_targets(tabs, targets, near)
    nudged = z_eval != targets
    t_geom = time.perf_counter() - t0

    # Far field under near-list exclusion.
    t0 = time.perf_counter()
    pos, charge, dipole, owner = [], [], [], []
    for t in tabs:
        p, c, d = element_far_sources(t)
        pos.append(p)
        charge.append(c)
        dipole.append(d)
        owner.append(np.full(len(p), t.element.index))
    sources = SourceSet(pos=np.concatenate(pos), charge=np.concatenate(charge),
                        dipole=np.concatenate(dipole),
                        owner=np.concatenate(owner))
    if cfg.merge_edges:
        sources = merge_shared_sources(sources)
    if cfg.backend == "tree":
        values = tree_sum(sources, z_eval, exclusion=near)
    else:
        values = direct_sum(sources, z_eval, exclusion=near)
    t_far = time.perf_counter() - t0

    # Near and self interactions, batched per element.
    t_near = 0.0
    t_self = 0.0
    inside_el = np.full(len(targets), -1, dtype=int)
    batches: dict[int, list[int]] = {}
    for i, nl in enumerate(near):
        for e in nl:
            batches.setdefault(int(e), []).append(i)
    for e, idx in batches.items():
        idx = np.asarray(idx)
        t0 = time.perf_counter()
        vals, inside, _ = evaluate_element(tabs[e], z_eval[idx])
        dt = time.perf_counter() - t0
        values[idx] += vals
        inside_el[idx[inside]] = e
        frac_inside = inside.mean() if len(inside) else 0.0
        t_self += dt * frac_inside
        t_near += dt * (1.0 - frac_inside)

    timings = {"T_geom": t_geom, "T_init": t_init, "T_F": t_far,
               "T_N": t_near, "T_S": t_self,
               "T_tot": time.perf_counter() - t_all}
    return EvaluateResult(targets=targets, values=values,
                          inside_element=inside_el,
                          n_near=np.array([len(nl) for nl in near]),
                          nudged=nudged, timings=timings,
                          config_hash=cfg.config_hash())


def oracle_values(mesh: geom.Mesh, density: Callable, targets: np.ndarray,
                  tol: float = 1e-14) -> np.ndarray:
    """Ground-truth potentials by per-element adaptive integration."""
    out = np.zeros(len(targets))
    for i, z0 in enumerate(targets):
        total = 0.0
        for el in mesh.elements:
            def g(x, y):
                return (np.log(np.hypot(x - z0.real, y - z0.imag))
                        / (2.0 * np.pi) * density(x, y))
            total += adaptive_triangle_integrate(g, el, tol, target=z0)
        out[i] = total
    return out


# ---------------------------------------------------------------------------
# Convergence study (fit-quality analogues of the approximation figures)
# ---------------------------------------------------------------------------

def run_convergence(mesh: geom.Mesh, density: Callable, orders: Sequence[int],
                    solver: str = "plu", seed: int = 0, n_samples: int = 20000
                    ) -> tuple[list[dict], list[dict]]:
    """Per-order fit errors and final-order coefficient magnitudes.

    Uses the first element of the mesh.  The Koornwinder columns hold the
    orthogonal-expansion reference fit (straight elements only).
    """
    from .approx import (error_estimate, eval_monomial_2d, fit_monomial_2d,
                         monomial_pairs)

    el = mesh.elements[0]
    rng = np.random.default_rng(seed)
    bary = rng.dirichlet((1.0, 1.0, 1.0), n_samples - 3 * (n_samples // 20))
    edge = rng.random((3 * (n_samples // 20), 2))
    # include boundary samples: map edge parameters onto the three edges
    s = edge[:, 0]
    which = (edge[:, 1] * 3).astype(int)
    zb = np.concatenate([el.edges[k].point(s[which == k]) for k in range(3)])
    xi_eta = np.column_stack([bary[:, 1], bary[:, 2]])
    zi = el.map_reference_points(xi_eta[:, 0], xi_eta[:, 1])
    z_samples = np.concatenate([zi, zb])
    f_true = density(z_samples.real, z_samples.imag)
    straight = not el.is_curved

    rows, coeff_rows = [], []
    for order in orders:
        ns = tri_nodes(order)
        zn = el.map_reference_points(ns.points[:, 0], ns.points[:, 1])
        std_n = (zn - el.center) / el.radius
        exp, report = fit_monomial_2d(std_n, density(zn.real, zn.imag), order,
                                      solver=solver, seed=seed)
        std_s = (z_samples - el.center) / el.radius
        err_mono = float(np.abs(eval_monomial_2d(exp, std_s) - f_true).max())
        row = {
            "order": order,
            "linf_monomial": err_mono,
            "coeff_norm_monomial": float(np.linalg.norm(exp.coef)),
            "estimator": error_estimate(report, order, "triangle"),
            "linf_koornwinder": float("nan"),
            "coeff_norm_koornwinder": float("nan"),
        }
        coef = None
        if straight:
            # reference fit in the orthonormal simplex basis at the samples
            v0, v1, v2 = el.vertices
            det = ((v1 - v0).conjugate() * (v2 - v0)).imag
            rel = z_samples - v0
            xi = ((rel.conjugate() * (v2 - v0)).imag / det)
            eta = (((v1 - v0).conjugate() * rel).imag / det)
            coef = koornwinder_fit(f_true, xi, eta, order)
            fit = koornwinder_basis(xi, eta, order) @ coef
            row["linf_koornwinder"] = float(np.abs(fit - f_true).max())
            row["coeff_norm_koornwinder"] = float(np.linalg.norm(coef))
        rows.append(row)
        if order == max(orders):
            for k, (m, n) in enumerate(monomial_pairs(order)):
                coeff_rows.append({
                    "index": k, "m": m, "n": n,
                    "monomial_abs": float(abs(exp.coef[k])),
                    "koornwinder_abs": (float(abs(coef[k])) if coef is not None
                                        else float("nan")),
                })
    return rows, coeff_rows


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def write_csv(path, header: str, columns: list[str], rows, config_hash: str
              ) -> None:
    lines = [f"# newtpot {header} config={config_hash}", ",".join(columns)]
    for row in rows:
        cells = []
        for c in columns:
            v = row[c] if isinstance(row, dict) else row[columns.index(c)]
            if isinstance(v, float):
                cells.append(f"{v:.17g}")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def write_run_json(path, cfg: RunConfig, timings: dict, extra=None) -> None:
    payload = {"config": asdict(cfg), "config_hash": cfg.config_hash(),
               "timings": timings}
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
