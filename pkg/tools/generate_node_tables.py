#!/usr/bin/env python3
"""Regenerate the shipped triangle node tables (src/newtpot/_nodes).

Deterministic: approximate Fekete selection on a fixed candidate lattice,
followed by determinant-ascent polish and moment-fitted weights.  Run from
the repository root.  Takes ~1 minute for orders 1..20.
"""

import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from newtpot import quadrule  # noqa: E402


def main() -> None:
    out_dir = pathlib.Path(__file__).resolve().parents[1] / "src" / "newtpot" / "_nodes"
    out_dir.mkdir(parents=True, exist_ok=True)
    for order in range(1, quadrule.MAX_TRI_ORDER + 1):
        text = quadrule.generate_node_asset(order)
        path = out_dir / f"vr_nodes_{order}.txt"
        path.write_text(text)
        data = np.loadtxt(path)
        data = np.atleast_2d(data)
        pts = data[:, :2]
        lam = quadrule.lebesgue_constant_tri(pts, order)
        print(f"order {order:2d}: {len(pts):3d} nodes, lebesgue {lam:7.2f}, "
              f"weight sum {data[:, 2].sum():.15f}")


if __name__ == "__main__":
    main()
