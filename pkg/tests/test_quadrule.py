import numpy as np
import pytest

from newtpot import geom, quadrule
from newtpot.errors import ConvergenceError, NewtpotError

from conftest import gauss_density


class TestGaussLegendre:
    def test_n1(self):
        r = quadrule.gauss_legendre(1)
        assert r.nodes == pytest.approx([0.0])
        assert r.weights == pytest.approx([2.0])

    def test_n2(self):
        r = quadrule.gauss_legendre(2)
        assert np.sort(r.nodes) == pytest.approx([-1 / np.sqrt(3), 1 / np.sqrt(3)])
        assert r.weights == pytest.approx([1.0, 1.0])

    def test_exp_integral_n16(self):
        r = quadrule.gauss_legendre(16)
        val = (r.weights * np.exp(r.nodes)).sum()
        assert abs(val - (np.e - 1 / np.e)) < 1e-15

    @pytest.mark.parametrize("n", [2, 4, 8, 16, 32])
    def test_monomial_exactness(self, n):
        r = quadrule.gauss_legendre(n)
        assert abs(r.weights.sum() - 2.0) < 1e-14
        for k in range(2 * n):
            exact = 2.0 / (k + 1) if k % 2 == 0 else 0.0
            got = (r.weights * r.nodes**k).sum()
            assert abs(got - exact) <= 1e-13 * max(1.0, abs(exact))

    def test_range_check(self):
        with pytest.raises(NewtpotError):
            quadrule.gauss_legendre(0)
        with pytest.raises(NewtpotError):
            quadrule.gauss_legendre(500)


class TestTriNodes:
    @pytest.mark.parametrize("order,count", [(1, 3), (12, 91), (20, 231)])
    def test_counts(self, order, count):
        ns = quadrule.tri_nodes(order)
        assert len(ns) == count

    @pytest.mark.parametrize("order", [1, 4, 8, 12, 16, 20])
    def test_strictly_interior_and_from_asset(self, order):
        ns = quadrule.tri_nodes(order)
        x, y = ns.points[:, 0], ns.points[:, 1]
        assert np.all(x > 0) and np.all(y > 0) and np.all(x + y < 1)
        assert ns.from_asset

    @pytest.mark.parametrize("order", [4, 12, 20])
    def test_weights_integrate_polynomials(self, order):
        ns = quadrule.tri_nodes(order)
        assert abs(ns.weights.sum() - 0.5) < 1e-12
        rng = np.random.default_rng(order)
        for _ in range(5):
            i, j = rng.integers(0, order // 2 + 1, 2)
            got = (ns.weights * ns.points[:, 0]**i * ns.points[:, 1]**j).sum()
            x, y, w = __import__("newtpot.koornwinder", fromlist=["x"]).simplex_quadrature(order + 3)
            exact = (w * x**i * y**j).sum()
            assert abs(got - exact) < 1e-13

    def test_fallback_flagged(self, monkeypatch):
        # force the asset lookup to miss
        quadrule.tri_nodes.cache_clear()
        monkeypatch.setattr(quadrule, "NODE_ASSET_DIR", "_missing_nodes")
        ns = quadrule.tri_nodes(6)
        assert not ns.from_asset
        assert ns.family == "warped-tensor-fallback"
        assert len(ns) == 28
        monkeypatch.undo()
        quadrule.tri_nodes.cache_clear()

    def test_out_of_range(self):
        with pytest.raises(NewtpotError):
            quadrule.tri_nodes(21)


class TestAdaptiveIntegrate:
    def test_constant_area(self, simplex_mesh):
        v = quadrule.adaptive_triangle_integrate(
            lambda x, y: np.ones_like(x), simplex_mesh.elements[0], 1e-13)
        assert v == pytest.approx(0.5, abs=1e-13)

    def test_linear(self, simplex_mesh):
        v = quadrule.adaptive_triangle_integrate(
            lambda x, y: x, simplex_mesh.elements[0], 1e-13)
        assert v == pytest.approx(1 / 6, abs=1e-13)

    def test_linearity_and_additivity(self, simplex_mesh):
        el = simplex_mesh.elements[0]
        f = gauss_density
        g = lambda x, y: np.sin(3 * x) * y
        tol = 1e-13
        vf = quadrule.adaptive_triangle_integrate(f, el, tol)
        vg = quadrule.adaptive_triangle_integrate(g, el, tol)
        vfg = quadrule.adaptive_triangle_integrate(
            lambda x, y: 2.0 * f(x, y) - 3.0 * g(x, y), el, tol)
        assert vfg == pytest.approx(2 * vf - 3 * vg, abs=5 * tol)
        # additivity under splitting the square into its two triangles
        sq = geom.square_mesh(1)
        parts = sum(quadrule.adaptive_triangle_integrate(f, e, tol)
                    for e in sq.elements)
        whole = (quadrule.adaptive_triangle_integrate(f, geom.triangle_mesh(0, 1, 1j).elements[0], tol)
                 + quadrule.adaptive_triangle_integrate(f, geom.triangle_mesh(1, 1 + 1j, 1j).elements[0], tol))
        assert parts == pytest.approx(whole, abs=2 * tol)

    def test_singular_log_kernel_disk_closed_form(self, disk_mesh):
        # this op is the ground-truth oracle; cross-check against the polar
        # closed form of the disk potential at the center
        total = 0.0
        for el in disk_mesh.elements:
            total += quadrule.adaptive_triangle_integrate(
                lambda x, y: np.log(np.hypot(x, y)) / (2 * np.pi), el,
                2.5e-15, target=0.0j)
        assert total == pytest.approx(-0.25, abs=5e-14)

    def test_near_singular_target(self, simplex_mesh):
        z0 = 0.5 - 5e-6j
        f = lambda x, y: np.log(np.hypot(x - z0.real, y - z0.imag)) / (2 * np.pi)
        v = quadrule.adaptive_triangle_integrate(f, simplex_mesh.elements[0],
                                                 1e-15, target=z0)
        v2 = quadrule.adaptive_triangle_integrate(f, simplex_mesh.elements[0],
                                                  1e-13, target=z0)
        assert v == pytest.approx(v2, abs=2e-13)

    def test_tolerance_floor(self, simplex_mesh):
        with pytest.raises(NewtpotError):
            quadrule.adaptive_triangle_integrate(
                lambda x, y: x, simplex_mesh.elements[0], 1e-16)

    def test_nonconvergence_carries_best_estimate(self, simplex_mesh):
        rough = lambda x, y: np.where((x * 1e4).astype(int) % 2 == 0, 1.0, -1.0)
        with pytest.raises(ConvergenceError) as ei:
            quadrule.adaptive_triangle_integrate(rough, simplex_mesh.elements[0],
                                                 1e-15, max_depth=3)
        assert ei.value.best_estimate is not None
