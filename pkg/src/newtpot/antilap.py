"""Sparse anti-Laplacian on 2-D monomial expansions, and edge traces.

For a monomial x^p y^q the identities

    AL[x^p y^q] = x^(p+2) y^q / ((p+2)(p+1))
                  - q(q-1)/((p+2)(p+1)) * AL[x^(p+2) y^(q-2)]        (p >= q)
    AL[x^p y^q] = x^p y^(q+2) / ((q+2)(q+1))
                  - p(p-1)/((q+2)(q+1)) * AL[x^(p-2) y^(q+2)]        (p <  q)

define a particular anti-Laplacian once the four low-order cases are fixed.
Rather than expanding each monomial into its full recurrence chain (which
would cost Theta(N^3) stored entries), the map is stored in factored form:
one "emit" coefficient and one same-diagonal "push" coefficient per input
cell, plus the base-case emits.  A single streaming sweep applies the map
in time (and storage) proportional to the number of expansion terms.

Different base-case conventions change the anti-Laplacian by a harmonic
polynomial only; the potential assembled through Green's third identity is
invariant to that choice (tested).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .approx import (
    MonomialExpansion1D,
    MonomialExpansion2D,
    SolveReport,
    coefficient_count,
    monomial_pairs,
)
from .errors import NewtpotError

logger = logging.getLogger(__name__)

# Base-case conventions: AL[x^p y^q] for p, q in {0, 1} as {(i, j): coef}.
_BASE_CASES = {
    "x2": {
        (0, 0): {(2, 0): 0.5},
        (1, 0): {(3, 0): 1.0 / 6.0},
        (0, 1): {(0, 3): 1.0 / 6.0},
        (1, 1): {(3, 1): 1.0 / 6.0},
    },
    "y2": {
        (0, 0): {(0, 2): 0.5},
        (1, 0): {(1, 2): 0.5},
        (0, 1): {(0, 3): 1.0 / 6.0},
        (1, 1): {(1, 3): 1.0 / 6.0},
    },
}


@dataclass(frozen=True)
class AntiLaplacianMap:
    """Factored sparse map from order-N coefficients to order-(N+2) ones.

    ``steps`` is the processing schedule: per input cell, flat indices of
    the cell, of the same-degree cell it pushes onto (-1 if none), and of
    the output cell it emits to, with the two coefficients.
    """

    order: int
    convention: str
    src: np.ndarray        # flat input index, in processing order
    push_dst: np.ndarray   # flat input index receiving the push (-1: none)
    push_coef: np.ndarray
    emit_dst: list         # flat output indices per step (int arrays)
    emit_coef: list

    @property
    def nnz(self) -> int:
        return int((self.push_coef != 0).sum() + sum(len(e) for e in self.emit_coef))


def _flat_index(order: int) -> dict[tuple[int, int], int]:
    # (i, j) = (x power, y power) -> flat canonical position
    return {(m - n, n): k for k, (m, n) in enumerate(monomial_pairs(order))}


def build_anti_laplacian_map(order: int, convention: str = "x2") -> AntiLaplacianMap:
    """Precompute the factored anti-Laplacian schedule for a given order."""
    if order > 60:
        raise NewtpotError("anti-Laplacian map limited to order <= 60")
    if convention not in _BASE_CASES:
        raise NewtpotError(f"unknown base-case convention '{convention}'")
    base = _BASE_CASES[convention]
    idx_in = _flat_index(order)
    idx_out = _flat_index(order + 2)

    cells = [(i, j) for (i, j) in idx_in]
    # x-route cells processed with q descending; y-route with p descending.
    x_route = sorted((c for c in cells if c[0] >= c[1] and (c[0] > 1 or c[1] > 1)),
                     key=lambda c: -c[1])
    y_route = sorted((c for c in cells if c[0] < c[1] and (c[0] > 1 or c[1] > 1)),
                     key=lambda c: -c[0])
    base_cells = [c for c in cells if c[0] <= 1 and c[1] <= 1]

    src, push_dst, push_coef, emit_dst, emit_coef = [], [], [], [], []
    for p, q in x_route + y_route:
        src.append(idx_in[(p, q)])
        if p >= q:
            denom = (p + 2) * (p + 1)
            emit_dst.append(np.array([idx_out[(p + 2, q)]]))
            emit_coef.append(np.array([1.0 / denom]))
            c = -q * (q - 1) / denom
            push_dst.append(idx_in[(p + 2, q - 2)] if c != 0.0 else -1)
            push_coef.append(c)
        else:
            denom = (q + 2) * (q + 1)
            emit_dst.append(np.array([idx_out[(p, q + 2)]]))
            emit_coef.append(np.array([1.0 / denom]))
            c = -p * (p - 1) / denom
            push_dst.append(idx_in[(p - 2, q + 2)] if c != 0.0 else -1)
            push_coef.append(c)
    for cell in base_cells:
        src.append(idx_in[cell])
        push_dst.append(-1)
        push_coef.append(0.0)
        targets = base[cell]
        emit_dst.append(np.array([idx_out[t] for t in targets]))
        emit_coef.append(np.array(list(targets.values())))

    return AntiLaplacianMap(
        order=order, convention=convention,
        src=np.asarray(src), push_dst=np.asarray(push_dst),
        push_coef=np.asarray(push_coef),
        emit_dst=emit_dst, emit_coef=emit_coef,
    )


def apply_anti_laplacian(almap: AntiLaplacianMap,
                         expansion: MonomialExpansion2D) -> MonomialExpansion2D:
    """phi with Laplacian(phi) = expansion, as an order-(N+2) expansion."""
    if expansion.order != almap.order:
        raise NewtpotError(
            f"expansion order {expansion.order} != map order {almap.order}")
    amended = expansion.coef.astype(float).copy()
    out = np.zeros(coefficient_count(almap.order + 2))
    for k in range(len(almap.src)):
        a = amended[almap.src[k]]
        if a == 0.0:
            continue
        out[almap.emit_dst[k]] += a * almap.emit_coef[k]
        if almap.push_dst[k] >= 0:
            amended[almap.push_dst[k]] += a * almap.push_coef[k]
    return MonomialExpansion2D(order=almap.order + 2, coef=out)


# ---------------------------------------------------------------------------
# Edge traces of the anti-Laplacian
# ---------------------------------------------------------------------------

@dataclass
class EdgeTrace:
    """1-D expansions of phi and of its single-layer density on one edge.

    ``phi`` expands the anti-Laplacian restricted to the edge; ``sigma``
    expands (d phi / d n) * (dl/dz), the complex single-layer density, with
    the metric factor folded in.  Both live in the standardized edge
    variable exposed by the companion EdgeFrame.  Nodal values at the
    collocation parameters are cached for reuse by the far-field rule.
    """

    order: int
    phi: MonomialExpansion1D
    sigma: MonomialExpansion1D
    params: np.ndarray       # collocation parameters in [0, 1] along the edge
    phi_nodes: np.ndarray    # phi values at the collocation points (real)
    dphidn_nodes: np.ndarray
    phi_report: SolveReport
    sigma_report: SolveReport

STRAIGHT_TRACE_EXTRA = 2   # trace order N + 2 on straight edges
CURVED_TRACE_EXTRA = 5     # N + 2 for the anti-Laplacian degree, + 3 for curvature
CURVED_TRACE_BUMP = 8      # escalation headroom over N + 5 (panel safety net)
CURVED_TRACE_TOL = 5e-13   # off-node verification target (relative)


def _edge_density_values(phi, dx, dy, frame, params):
    from .approx import eval_monomial_2d

    z = frame.position(params)
    tangent = frame.unit_tangent(params)
    phi_vals = eval_monomial_2d(phi, z)
    gx = eval_monomial_2d(dx, z)
    gy = eval_monomial_2d(dy, z)
    normal = -1j * tangent  # outward for counterclockwise traversal
    dphidn = gx * normal.real + gy * normal.imag
    sigma_vals = dphidn * np.conj(tangent)  # fold in dl/dz
    return phi_vals, dphidn, sigma_vals, tangent


def build_edge_traces(phi: MonomialExpansion2D, frames, solver: str = "plu",
                      seed: int = 0) -> list[EdgeTrace]:
    """Fit the boundary densities of Green's third identity on each edge.

    ``phi`` is the anti-Laplacian expansion (order N + 2) in the element's
    standardized frame; ``frames`` are per-edge (or per-panel) EdgeFrame
    objects.  On a straight edge the trace IS a polynomial of degree N + 2,
    so collocation at N + 3 Gauss-Legendre nodes (through a cached
    factorization of the standard Vandermonde) is exact.  On a curved panel
    the restriction is only approximately a polynomial in the complex edge
    variable; the order starts at N + 5 and may escalate a little (panels
    are deviation-limited, so the fit converges within a few extra orders,
    verified at off-node checkpoints).
    """
    from .approx import (Factorized1D, eval_monomial_1d, fit_monomial_1d,
                         expansion_dx, expansion_dy)

    n_density = phi.order - 2
    dx = expansion_dx(phi)
    dy = expansion_dy(phi)
    traces = []
    for fi, frame in enumerate(frames):
        if not frame.is_curved:
            order = n_density + STRAIGHT_TRACE_EXTRA
            params, var, tangent = frame.collocation(order + 1)
            phi_vals, dphidn, sigma_vals, _ = _edge_density_values(
                phi, dx, dy, frame, params)
            phi_exp, rep_phi = fit_monomial_1d(phi_vals.astype(complex), order,
                                               solver=solver, seed=seed)
            sig_exp, rep_sig = fit_monomial_1d(sigma_vals, order,
                                               solver=solver, seed=seed)
        else:
            order = n_density + CURVED_TRACE_EXTRA
            cap = order + CURVED_TRACE_BUMP
            s_chk = np.linspace(0.0, 1.0, 4 * cap + 1)
            v_chk = frame.variable(s_chk)
            phi_chk, _, sig_chk, _ = _edge_density_values(phi, dx, dy, frame, s_chk)
            scale = max(1.0, np.abs(phi_chk).max(), np.abs(sig_chk).max())
            while True:
                params, var, tangent = frame.collocation(order + 1)
                phi_vals, dphidn, sigma_vals, _ = _edge_density_values(
                    phi, dx, dy, frame, params)
                fac = Factorized1D(var, order, solver, seed=seed + 7919 * (fi + 1))
                phi_exp, rep_phi = fit_monomial_1d(phi_vals.astype(complex),
                                                   order, factorization=fac)
                sig_exp, rep_sig = fit_monomial_1d(sigma_vals, order,
                                                   factorization=fac)
                err = max(np.abs(eval_monomial_1d(phi_exp, v_chk) - phi_chk).max(),
                          np.abs(eval_monomial_1d(sig_exp, v_chk) - sig_chk).max())
                if err <= CURVED_TRACE_TOL * scale or order >= cap:
                    if err > CURVED_TRACE_TOL * scale:
                        logger.warning(
                            "curved trace stalled at order %d (err %.2e)",
                            order, err)
                    break
                order = min(order + 4, cap)
        traces.append(EdgeTrace(order=order, phi=phi_exp, sigma=sig_exp,
                                params=params, phi_nodes=phi_vals,
                                dphidn_nodes=dphidn,
                                phi_report=rep_phi, sigma_report=rep_sig))
    return traces
