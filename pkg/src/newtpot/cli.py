"""Command-line driver: evaluate, convergence, bench, oracle.

Exit codes: 0 success, 2 configuration/input validation error, 3 numerical
failure.  All tabular output is CSV with a leading comment line embedding
the config hash; run metadata (including timings) goes to a JSON sidecar.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import geom, pipeline
from .element import evaluate_element, precompute_element
from .errors import (ConvergenceError, GeometryError, MeshFormatError,
                     NewtpotError, OnBoundaryError, SolveError)
from .pipeline import RunConfig, density_function, make_targets
from .quadrule import adaptive_triangle_integrate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mesh", required=True, help="mesh file (NEWTPOT-MESH v1)")
    p.add_argument("--density", default="gauss",
                   help="gauss | sin56 | const | samples:<path>")
    p.add_argument("--order", type=int, default=12)
    p.add_argument("--solver", choices=("tsvd", "plu"), default="plu")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output path prefix")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="newtpot",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("evaluate", help="full-pipeline potential evaluation")
    _common_flags(pe)
    pe.add_argument("--backend", choices=("direct", "tree"), default="tree")
    pe.add_argument("--targets", default="nodes:12")
    pe.add_argument("--merge-edges", action="store_true")

    pc = sub.add_parser("convergence", help="monomial fit convergence sweep")
    _common_flags(pc)
    pc.add_argument("--orders", default="4,8,12,16,20",
                    help="comma-separated expansion orders")

    pb = sub.add_parser("bench", help="close/far/adaptive throughput table")
    _common_flags(pb)
    pb.add_argument("--probe", default="0.5,0,0,-1",
                    help="x0,y0,dx,dy of the probe ray")
    pb.add_argument("--h-values", default="5e-1,5e-2,5e-3,5e-4,5e-5,5e-6")
    pb.add_argument("--reps", type=int, default=2000,
                    help="close-path evaluations per throughput sample")

    po = sub.add_parser("oracle", help="adaptive-integration ground truth")
    _common_flags(po)
    po.add_argument("--targets", default="nodes:12")
    po.add_argument("--tol", type=float, default=1e-14)
    po.add_argument("--eval-csv", default=None,
                    help="evaluate-run CSV to join error columns onto")
    return ap


def _out_prefix(args) -> Path:
    out = args.out or f"newtpot_{args.command}"
    path = Path(out)
    if path.parent != Path("."):
        path.parent.mkdir(parents=True, exist_ok=True)
    return path


def cmd_evaluate(args) -> int:
    cfg = RunConfig(mesh=args.mesh, density=args.density, order=args.order,
                    solver=args.solver, backend=args.backend,
                    targets=args.targets, out=args.out, seed=args.seed,
                    merge_edges=args.merge_edges)
    res = pipeline.run_evaluate(cfg)
    prefix = _out_prefix(args)
    rows = [
        {"x": float(z.real), "y": float(z.imag), "value": float(v),
         "inside_element": int(ie), "n_near": int(nn), "nudged": int(ng)}
        for z, v, ie, nn, ng in zip(res.targets, res.values,
                                    res.inside_element, res.n_near, res.nudged)
    ]
    pipeline.write_csv(f"{prefix}.csv", "evaluate",
                       ["x", "y", "value", "inside_element", "n_near", "nudged"],
                       rows, res.config_hash)
    pipeline.write_run_json(f"{prefix}.json", cfg, res.timings)
    for k, v in res.timings.items():
        print(f"{k} = {v:.4f} s")
    print(f"wrote {prefix}.csv ({len(rows)} targets)")
    return EXIT_OK


def cmd_convergence(args) -> int:
    orders = [int(v) for v in args.orders.split(",")]
    mesh = geom.load_mesh(args.mesh)
    density = density_function(args.density)
    if density is None:
        raise NewtpotError("convergence needs a callable density")
    cfg = RunConfig(mesh=args.mesh, density=args.density, order=max(orders),
                    solver=args.solver, targets="nodes:1", seed=args.seed)
    rows, coeff_rows = pipeline.run_convergence(mesh, density, orders,
                                                solver=args.solver,
                                                seed=args.seed)
    prefix = _out_prefix(args)
    pipeline.write_csv(f"{prefix}.csv", "convergence",
                       ["order", "linf_monomial", "linf_koornwinder",
                        "coeff_norm_monomial", "coeff_norm_koornwinder",
                        "estimator"], rows, cfg.config_hash())
    pipeline.write_csv(f"{prefix}_coeffs.csv", "coeffs",
                       ["index", "m", "n", "monomial_abs", "koornwinder_abs"],
                       coeff_rows, cfg.config_hash())
    for r in rows:
        print(f"order {r['order']:3d}: monomial {r['linf_monomial']:.3e}  "
              f"koornwinder {r['linf_koornwinder']:.3e}  "
              f"|a| {r['coeff_norm_monomial']:.3f}")
    print(f"wrote {prefix}.csv, {prefix}_coeffs.csv")
    return EXIT_OK


def cmd_bench(args) -> int:
    mesh = geom.load_mesh(args.mesh)
    density = density_function(args.density)
    if density is None:
        raise NewtpotError("bench needs a callable density")
    cfg = RunConfig(mesh=args.mesh, density=args.density, order=args.order,
                    solver=args.solver, targets="probes:" + args.probe,
                    seed=args.seed)
    x0, y0, dx, dy = (float(v) for v in args.probe.split(","))
    hs = [float(v) for v in args.h_values.split(",")]
    el = mesh.elements[0]
    tables = precompute_element(el, density, args.order, solver=args.solver,
                                seed=args.seed)
    rng = np.random.default_rng(args.seed)
    rows = []
    for h in hs:
        z0 = complex(x0 + h * dx, y0 + h * dy)
        jitter = (rng.random(args.reps) - 0.5) * (1e-3 * h)
        jitter[0] = 0.0  # keep an exact probe for the error column
        batch = z0 + jitter  # spread along x to avoid degenerate timing
        evaluate_element(tables, batch)  # warm caches before timing
        best = np.inf
        for _ in range(5):
            t0 = time.perf_counter()
            vals, _, _ = evaluate_element(tables, batch)
            best = min(best, time.perf_counter() - t0)
        s_exps = args.reps / best
        u = float(vals[0])

        def g(x, y):
            return (np.log(np.hypot(x - z0.real, y - z0.imag)) / (2 * np.pi)
                    * density(x, y))

        t0 = time.perf_counter()
        ref = adaptive_triangle_integrate(g, el, 1e-14, target=z0)
        t_adap = time.perf_counter() - t0
        s_adap = 1.0 / t_adap
        rows.append({"h": h, "s_exps": s_exps, "s_adap": s_adap,
                     "ratio": s_exps / s_adap, "e_exps": abs(u - ref),
                     "e_adap": 0.0})
        print(f"h={h:8.1e}  S_exps={s_exps:10.3e}/s  S_adap={s_adap:9.3e}/s  "
              f"ratio={s_exps/s_adap:8.1f}  E_exps={abs(u-ref):.2e}")
    prefix = _out_prefix(args)
    pipeline.write_csv(f"{prefix}.csv", "bench",
                       ["h", "s_exps", "s_adap", "ratio", "e_exps", "e_adap"],
                       rows, cfg.config_hash())
    print(f"wrote {prefix}.csv")
    return EXIT_OK


def cmd_oracle(args) -> int:
    mesh = geom.load_mesh(args.mesh)
    density = density_function(args.density)
    if density is None:
        raise NewtpotError("oracle needs a callable density")
    cfg = RunConfig(mesh=args.mesh, density=args.density, order=args.order,
                    solver=args.solver, targets=args.targets, seed=args.seed)
    targets = make_targets(args.targets, mesh)
    ref = pipeline.oracle_values(mesh, density, targets, tol=args.tol)
    prefix = _out_prefix(args)
    if args.eval_csv:
        data = np.loadtxt(args.eval_csv, delimiter=",", skiprows=2, ndmin=2)
        if len(data) != len(targets):
            raise NewtpotError("--eval-csv row count does not match targets")
        err = np.abs(data[:, 2] - ref)
        rows = [{"x": float(t.real), "y": float(t.imag),
                 "value": float(v), "oracle": float(o),
                 "abs_err": float(e),
                 "log10_err": float(np.log10(max(e, 1e-300)))}
                for t, v, o, e in zip(targets, data[:, 2], ref, err)]
        cols = ["x", "y", "value", "oracle", "abs_err", "log10_err"]
    else:
        rows = [{"x": float(t.real), "y": float(t.imag), "oracle": float(o)}
                for t, o in zip(targets, ref)]
        cols = ["x", "y", "oracle"]
    pipeline.write_csv(f"{prefix}.csv", "oracle", cols, rows, cfg.config_hash())
    print(f"wrote {prefix}.csv ({len(rows)} targets)")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"evaluate": cmd_evaluate, "convergence": cmd_convergence,
                "bench": cmd_bench, "oracle": cmd_oracle}
    try:
        return handlers[args.command](args)
    except (MeshFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolveError, ConvergenceError, OnBoundaryError, GeometryError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NewtpotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
