import logging

import numpy as np
import pytest

from newtpot import approx, quadrule
from newtpot.errors import SolveError

from conftest import gauss_density, sin56_density
from oracles import interpolant_monomial_coefficients

EPS = approx.EPS


def std_simplex_frame(points):
    c = complex(1 / 3, 1 / 3)
    r = np.sqrt(5) / 3
    z = points[:, 0] + 1j * points[:, 1]
    return (z - c) / r


def dense_simplex_samples(n=20000, seed=0):
    rng = np.random.default_rng(seed)
    b = rng.dirichlet((1, 1, 1), n)
    return np.column_stack([b[:, 1], b[:, 2]])


class TestVandermonde2D:
    def test_order0(self):
        v = approx.vandermonde_2d(np.array([[0.3, 0.4], [0.1, 0.9]]), 0)
        assert v == pytest.approx(np.ones((2, 1)))

    def test_order1_origin_row(self):
        v = approx.vandermonde_2d(np.array([[0.0, 0.0]]), 1)
        assert v[0] == pytest.approx([1.0, 0.0, 0.0])

    def test_order2_ones_row(self):
        v = approx.vandermonde_2d(np.array([[1.0, 1.0]]), 2)
        assert v.shape == (1, 6)
        assert v[0] == pytest.approx(np.ones(6))


class TestTruncatedSVD:
    def test_identity(self):
        rng = np.random.default_rng(0)
        b = rng.standard_normal(5)
        x, rep = approx.solve_truncated_svd(np.eye(5), b)
        assert x == pytest.approx(b)
        assert rep.rank == 5
        assert rep.residual_ok()

    def test_tiny_singular_value_truncated(self):
        x, rep = approx.solve_truncated_svd(np.diag([1.0, 1e-20]),
                                            np.array([1.0, 1.0]))
        assert x == pytest.approx([1.0, 0.0])
        assert rep.rank == 1

    def test_norm_bound_vs_exact_interpolant(self):
        # 21-node Chebyshev Vandermonde, samples of exp(t)
        nodes = approx.chebyshev_nodes(21)
        a = np.vander(nodes, 21, increasing=True)
        b = np.exp(nodes)
        x, rep = approx.solve_truncated_svd(a, b)
        a_star = interpolant_monomial_coefficients(nodes, b)
        assert np.linalg.norm(x) <= (7 / 3) * np.linalg.norm(a_star) * (1 + EPS)


class TestPollutedLU:
    def test_identity(self):
        rng = np.random.default_rng(1)
        b = rng.standard_normal(6)
        x, rep = approx.solve_polluted_lu(np.eye(6), b, seed=5)
        assert np.abs(x - b).max() < 1e-14
        assert rep.seed == 5

    def test_residual_contract_on_ill_conditioned_fit(self):
        nodes = approx.chebyshev_nodes(21)
        a = np.vander(nodes, 21, increasing=True)
        x, rep = approx.solve_polluted_lu(a, np.exp(nodes), seed=2)
        assert rep.residual_ok()

    def test_deterministic_for_fixed_seed(self):
        nodes = quadrule.gauss_legendre(15).nodes
        a = np.vander(nodes, 15, increasing=True)
        b = np.cos(nodes)
        x1, _ = approx.solve_polluted_lu(a, b, seed=42)
        x2, _ = approx.solve_polluted_lu(a, b, seed=42)
        assert np.array_equal(x1, x2)
        x3, _ = approx.solve_polluted_lu(a, b, seed=43)
        assert not np.array_equal(x1, x3)

    def test_agreement_with_tsvd_pointwise(self):
        nodes = quadrule.gauss_legendre(21).nodes
        a = np.vander(nodes, 21, increasing=True)
        b = np.exp(nodes)
        x1, _ = approx.solve_polluted_lu(a, b, seed=0)
        x2, _ = approx.solve_truncated_svd(a, b)
        t = np.linspace(-1, 1, 1000)
        v1 = np.polyval(x1[::-1], t)
        v2 = np.polyval(x2[::-1], t)
        assert np.abs(v1 - v2).max() < 1e-12

    def test_requires_square(self):
        with pytest.raises(SolveError):
            approx.solve_polluted_lu(np.ones((3, 2)), np.ones(3))


class TestFit2D:
    def test_constant(self):
        ns = quadrule.tri_nodes(4)
        exp, _ = approx.fit_monomial_2d(std_simplex_frame(ns.points),
                                        np.full(len(ns), 3.25), 4)
        assert exp.coef[0] == pytest.approx(3.25, abs=1e-13)
        assert np.abs(exp.coef[1:]).max() < 1e-13
        # at higher orders individual coefficients pick up eps*cond(V)
        # leakage, but the fitted function still reproduces the constant
        ns = quadrule.tri_nodes(12)
        exp, _ = approx.fit_monomial_2d(std_simplex_frame(ns.points),
                                        np.full(len(ns), 3.25), 12)
        samples = dense_simplex_samples(2000)
        vals = approx.eval_monomial_2d(exp, std_simplex_frame(samples))
        assert np.abs(vals - 3.25).max() < 1e-13

    def test_linear_exact(self):
        ns = quadrule.tri_nodes(4)
        std = std_simplex_frame(ns.points)
        vals = std.real + 2 * std.imag
        exp, _ = approx.fit_monomial_2d(std, vals, 4)
        pairs = approx.monomial_pairs(4)
        assert exp.coef[pairs.index((1, 0))] == pytest.approx(1.0, abs=1e-12)
        assert exp.coef[pairs.index((1, 1))] == pytest.approx(2.0, abs=1e-12)

    @pytest.mark.parametrize("solver", ["tsvd", "plu"])
    def test_gauss_n20_linf(self, solver):
        ns = quadrule.tri_nodes(20)
        std = std_simplex_frame(ns.points)
        exp, rep = approx.fit_monomial_2d(
            std, gauss_density(ns.points[:, 0], ns.points[:, 1]), 20,
            solver=solver, seed=3)
        samples = dense_simplex_samples()
        err = np.abs(approx.eval_monomial_2d(exp, std_simplex_frame(samples))
                     - gauss_density(samples[:, 0], samples[:, 1])).max()
        assert err < 1e-12
        assert rep.residual_ok()

    @pytest.mark.parametrize("solver", ["tsvd", "plu"])
    @pytest.mark.parametrize("order", [2, 4, 6])
    def test_exact_reproduction_of_polynomial(self, solver, order):
        rng = np.random.default_rng(9)
        truth = approx.MonomialExpansion2D(
            order=order, coef=rng.standard_normal(approx.coefficient_count(order)))
        ns = quadrule.tri_nodes(order)
        std = std_simplex_frame(ns.points)
        exp, _ = approx.fit_monomial_2d(std, approx.eval_monomial_2d(truth, std),
                                        order, solver=solver, seed=1)
        rel = np.abs(exp.coef - truth.coef).max() / np.abs(truth.coef).max()
        assert rel < 1e-11

    @pytest.mark.parametrize("solver", ["tsvd", "plu"])
    def test_polynomial_reproduced_in_value_space(self, solver):
        # at higher orders the Vandermonde condition number makes individual
        # coefficients drift at eps*cond, but the fitted polynomial still
        # matches the original uniformly
        rng = np.random.default_rng(10)
        order = 12
        truth = approx.MonomialExpansion2D(
            order=order, coef=rng.standard_normal(approx.coefficient_count(order)))
        ns = quadrule.tri_nodes(order)
        std = std_simplex_frame(ns.points)
        exp, _ = approx.fit_monomial_2d(std, approx.eval_monomial_2d(truth, std),
                                        order, solver=solver, seed=1)
        samples = std_simplex_frame(dense_simplex_samples(5000))
        diff = np.abs(approx.eval_monomial_2d(exp, samples)
                      - approx.eval_monomial_2d(truth, samples)).max()
        assert diff < 1e-12 * np.abs(truth.coef).max()

    def test_oversampled_uses_tsvd(self):
        rng = np.random.default_rng(2)
        pts = rng.dirichlet((1, 1, 1), 300)[:, 1:]
        std = std_simplex_frame(pts)
        exp, rep = approx.fit_monomial_2d(std, gauss_density(pts[:, 0], pts[:, 1]),
                                          8, solver="tsvd")
        assert rep.solver == "tsvd"
        with pytest.raises(SolveError):
            approx.fit_monomial_2d(std, np.zeros(len(pts)), 8, solver="plu")


class TestFit1D:
    def test_t_squared(self):
        nodes = quadrule.gauss_legendre(3).nodes
        exp, _ = approx.fit_monomial_1d(nodes**2 + 0j, 2)
        assert np.abs(exp.coef - [0, 0, 1]).max() < 1e-14

    def test_edge_trace_of_x_squared(self):
        # phi(x, y) = x^2 on the edge (0,0)->(1,0), parametrized t in [-1,1]
        nodes = quadrule.gauss_legendre(3).nodes
        x = 0.5 * (nodes + 1.0)
        exp, _ = approx.fit_monomial_1d(x**2 + 0j, 2)
        assert np.abs(exp.coef - [0.25, 0.5, 0.25]).max() < 1e-13

    def test_straight_trace_degree_preserved(self):
        # restriction of a degree-N 2-D expansion to a straight edge is
        # exactly degree N: higher coefficients vanish
        rng = np.random.default_rng(3)
        order = 8
        e2d = approx.MonomialExpansion2D(
            order=order, coef=rng.standard_normal(approx.coefficient_count(order)))
        t = quadrule.gauss_legendre(13).nodes
        a, b = 0.2 + 0.1j, 0.7 + 0.65j
        z = 0.5 * (a + b) + 0.5 * (b - a) * t
        vals = approx.eval_monomial_2d(e2d, z) + 0j
        exp, _ = approx.fit_monomial_1d(vals, 12)
        tail = np.abs(exp.coef[order + 1:]).max()
        assert tail < 1e-12 * np.linalg.norm(exp.coef)

    def test_cached_standard_solver_reused(self):
        s1 = approx.standard_edge_solver(10, "plu", 0)
        s2 = approx.standard_edge_solver(10, "plu", 0)
        assert s1 is s2


class TestEvalAndGrad:
    def test_hand_example(self):
        exp = approx.MonomialExpansion2D(order=1, coef=np.array([1.0, 2.0, 3.0]))
        # 1 + 2 x + 3 y at (0.5, -1) -> 1 + 1 - 3 = -1
        assert approx.eval_monomial_2d(exp, np.array([0.5 - 1.0j]))[0] == pytest.approx(-1.0)

    def test_gradient_of_x_squared(self):
        exp = approx.MonomialExpansion2D(order=2, coef=np.zeros(6))
        exp.coef[approx.monomial_pairs(2).index((2, 0))] = 1.0
        gx, gy = approx.grad_monomial_2d(exp, np.array([0.7 + 0.4j]))
        assert gx[0] == pytest.approx(1.4)
        assert gy[0] == pytest.approx(0.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        exp = approx.MonomialExpansion2D(
            order=12, coef=rng.standard_normal(approx.coefficient_count(12)))
        pts = (rng.uniform(-0.6, 0.6, 100) + 1j * rng.uniform(-0.6, 0.6, 100))
        gx, gy = approx.grad_monomial_2d(exp, pts)
        h = 1e-6
        fdx = (approx.eval_monomial_2d(exp, pts + h)
               - approx.eval_monomial_2d(exp, pts - h)) / (2 * h)
        fdy = (approx.eval_monomial_2d(exp, pts + 1j * h)
               - approx.eval_monomial_2d(exp, pts - 1j * h)) / (2 * h)
        scale = np.abs(gx).max() + np.abs(gy).max()
        assert np.abs(gx - fdx).max() / scale < 1e-8
        assert np.abs(gy - fdy).max() / scale < 1e-8


class TestErrorEstimate:
    def test_printed_formula_value(self):
        rep = approx.SolveReport(size=231, rank=231, solution_norm=1.0,
                                 residual_norm=0.0, matrix_norm=1.0,
                                 estimator=0.0, solver="tsvd")
        val = approx.error_estimate(rep, 20, "chebyshev")
        assert val == pytest.approx(1.20e-14, rel=2e-2)

    def test_chebyshev_lebesgue_bound(self):
        lam = approx.lebesgue_constant_1d(21, "chebyshev")
        bound = (2 / np.pi) * np.log(21) + 1
        assert bound == pytest.approx(2.938, abs=2e-3)
        assert lam <= bound

    def test_zero_solution(self):
        rep = approx.SolveReport(size=10, rank=10, solution_norm=0.0,
                                 residual_norm=0.0, matrix_norm=5.0,
                                 estimator=0.0, solver="plu")
        assert approx.error_estimate(rep, 9, "legendre") == 0.0


class TestLegendreCoefficientConjecture:
    def test_bounded_monomial_norm_logged(self, caplog):
        # random functions whose normalized-Legendre coefficients decay like
        # 2^-i keep monomial coefficient norms small; this is checked
        # experimentally (and logged), not asserted as a theorem
        rng = np.random.default_rng(17)
        nodes = approx.chebyshev_nodes(21)
        worst = 0.0
        for _ in range(50):
            c = rng.uniform(-1, 1, 21) * 2.0 ** -np.arange(21)
            vals = np.polynomial.legendre.legval(nodes, c * np.sqrt((2 * np.arange(21) + 1) / 2))
            x, _ = approx.solve_truncated_svd(np.vander(nodes, 21, increasing=True), vals)
            worst = max(worst, float(np.linalg.norm(x)))
        logging.getLogger(__name__).info(
            "legendre-decay suite: worst monomial coefficient norm %.3f", worst)
        assert worst < 100.0  # conjectured slow growth, observed ~O(1)
