import numpy as np
import pytest

from newtpot import approx, geom, layerpot
from newtpot.errors import OnBoundaryError
from newtpot.layerpot import (EdgeFrame, cauchy_table_curved,
                              cauchy_table_straight, edge_p0,
                              layer_potentials_close, layer_potentials_far)

from oracles import pq_oracle_curve, pq_oracle_segment


def random_close_zone_targets(rng, n, lo=0.1, keepout=1e-3):
    xe = (lo + (1.3 - lo) * rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
    d = np.abs(xe - np.clip(xe.real, -1.0, 1.0))
    return xe[d > keepout]


@pytest.fixture(scope="module")
def arc_frame():
    arc = geom.Edge.circular_arc(0.0, 1.0, 0.0, np.pi / 2)
    return EdgeFrame.from_edge(arc, origin=0.0, scale=1.0)


class TestStraightTables:
    def test_closed_forms_at_two(self):
        t = cauchy_table_straight(np.array([2.0 + 0j]), 3)
        assert t.p[0, 0] == pytest.approx(np.log(1 / 3), abs=1e-14)
        assert t.p[1, 0] == pytest.approx(2 * np.log(1 / 3) + 2, abs=1e-14)
        assert t.q[0, 0].real == pytest.approx(3 * np.log(3) - 2, abs=1e-14)

    def test_recurrence_consistency_in_zone(self):
        rng = np.random.default_rng(7)
        xe = random_close_zone_targets(rng, 500)
        t = cauchy_table_straight(xe, 30)
        k = np.arange(1, 31)
        inhom = (1.0 - (-1.0) ** k) / k
        resid = t.p[1:31] - (xe[None, :] * t.p[0:30] + inhom[:, None])
        scale = np.abs(t.p[1:31]) + 1.0
        assert (np.abs(resid) / scale).max() < 1e-12

    def test_matches_quadrature_oracle(self):
        rng = np.random.default_rng(3)
        xe = random_close_zone_targets(rng, 120)
        t = cauchy_table_straight(xe, 30)
        for i in range(0, len(xe), 7):
            p_ref, q_ref = pq_oracle_segment(complex(xe[i]), 30)
            rp = np.abs(t.p[:31, i] - p_ref) / np.maximum(np.abs(p_ref), 1e-2)
            rq = np.abs(t.q[:31, i] - q_ref) / np.maximum(np.abs(q_ref), 1e-2)
            assert rp.max() < 1e-12
            assert rq.max() < 1e-12

    def test_on_segment_rejected(self):
        with pytest.raises(OnBoundaryError):
            cauchy_table_straight(np.array([0.25 + 0j]), 5)

    def test_exact_endpoint_data_near_vertex(self):
        # endpoint differences supplied in physical coordinates keep full
        # relative accuracy for targets ~1e-12 from an endpoint
        e = geom.Edge.straight(0.0, 1.0)
        fr = EdgeFrame.from_edge(e, origin=0.0, scale=1.0)
        z = np.array([-1e-12 - 1e-12j])
        xe, wa, wb = fr.target_data(z)
        t = cauchy_table_straight(xe, 4, wa=wa, wb=wb)
        exact_p0 = np.log((1.0 - xe[0]) / (-1.0 - xe[0] + 0j))
        # reference via the physical ratio (b - z)/(a - z)
        ref = np.log((1.0 - z[0]) / (0.0 - z[0]))
        assert t.p[0, 0] == pytest.approx(ref, rel=1e-13)


class TestCurvedTables:
    def test_flat_curve_degenerates_to_straight(self):
        flat = geom.Edge(0.0, 2.0, cheb=np.array([1.0 + 0j, 1.0 + 0j]))
        fr = EdgeFrame.from_edge(flat, origin=0.0, scale=1.0)
        rng = np.random.default_rng(1)
        xe = random_close_zone_targets(rng, 150, keepout=2e-2)
        tc = cauchy_table_curved(fr, xe, 20)
        ts = cauchy_table_straight(xe, 20)
        assert np.abs(tc.p - ts.p).max() < 1e-13
        assert np.abs(tc.q - ts.q).max() < 1e-13

    def test_quarter_circle_interior_point(self, arc_frame):
        x = arc_frame.target_coord(0.3 + 0.3j)
        t = cauchy_table_curved(arc_frame, np.array([x]), 8,
                                side=np.array([1]))
        p_ref, _ = pq_oracle_curve(arc_frame, complex(x), 8)
        assert np.abs(t.p[:9, 0] - p_ref).max() < 1e-12

    def test_matches_branch_tracking_oracle(self, arc_frame):
        rng = np.random.default_rng(5)
        xs = (0.05 + 1.24 * rng.random(100)) * np.exp(2j * np.pi * rng.random(100))
        keep = np.abs(xs[:, None] - arc_frame.polyline[None, :]).min(1) > 3e-3
        xs = xs[keep]
        t = cauchy_table_curved(arc_frame, xs, 30)
        for i in range(0, len(xs), 5):
            p_ref, q_ref = pq_oracle_curve(arc_frame, complex(xs[i]), 30)
            rp = np.abs(t.p[:31, i] - p_ref) / np.maximum(np.abs(p_ref), 1e-2)
            rq = np.abs(t.q[:31, i] - q_ref) / np.maximum(np.abs(q_ref), 1e-2)
            assert rp.max() < 1e-12
            assert rq.max() < 1e-12

    def test_winding_identity_closed_boundary(self, disk_mesh):
        el = disk_mesh.elements[0]
        frames = [EdgeFrame.from_edge(e, el.center, el.radius)
                  for e in el.edges]
        rng = np.random.default_rng(9)
        z = rng.uniform(-1.3, 1.3, 3000) + 1j * rng.uniform(-1.3, 1.3, 3000)
        std = (z - el.center) / el.radius
        dmin = np.min([f.distance(std) for f in frames], axis=0) * el.radius
        z = z[dmin > 1e-4]
        p0 = sum(edge_p0(f, z) for f in frames)
        inside = (np.abs(z) < 1) & (z.real > 0) & (z.imag > 0)
        expect = np.where(inside, 2j * np.pi, 0.0)
        assert np.abs(p0 - expect).max() < 1e-10


class TestPotentialAssembly:
    def test_zero_traces(self, simplex_mesh):
        el = simplex_mesh.elements[0]
        fr = EdgeFrame.from_edge(el.edges[0], el.center, el.radius)
        table = cauchy_table_straight(np.array([2.0 + 1.0j]), 6)
        single, double = layer_potentials_close(np.zeros(7, complex),
                                                np.zeros(7, complex), table, fr)
        assert single[0] == 0.0 and double[0] == 0.0

    def test_constant_double_layer_winding(self, simplex_mesh):
        # double layer of density 1 over the full boundary: 1 inside, 0 outside
        el = simplex_mesh.elements[0]
        frames = [EdgeFrame.from_edge(e, el.center, el.radius) for e in el.edges]
        for z, expect in ((complex(1 / 3, 1 / 3), 1.0), (2.0 + 2.0j, 0.0)):
            total = 0.0
            for fr in frames:
                xe, wa, wb = fr.target_data(np.array([z]))
                table = cauchy_table_straight(xe, 4, wa=wa, wb=wb)
                one = np.array([1.0 + 0j, 0, 0, 0, 0])
                _, double = layer_potentials_close(one, np.zeros(5, complex),
                                                   table, fr)
                total += double[0]
            assert total == pytest.approx(expect, abs=1e-13)

    def test_far_single_layer_zero_density(self, simplex_mesh):
        from newtpot.element import precompute_element
        tab = precompute_element(simplex_mesh.elements[0],
                                 lambda x, y: np.zeros_like(np.asarray(x)), 6)
        s, d = layer_potentials_far(tab.far_rules[0], np.array([3.0 + 2.0j]))
        assert s[0] == 0.0 and d[0] == 0.0

    def test_far_double_layer_subtended_angle(self, simplex_mesh):
        # constant density 1 on one edge: the double layer equals the
        # subtended angle / 2 pi; verified against adaptive 1-D quadrature
        el = simplex_mesh.elements[0]
        fr = EdgeFrame.from_edge(el.edges[0], el.center, el.radius)
        z_far = 2.0 - 1.5j
        std = (z_far - el.center) / el.radius
        xe, wa, wb = fr.target_data(np.array([z_far]))
        table = cauchy_table_straight(xe, 4, wa=wa, wb=wb)
        one = np.zeros(5, complex)
        one[0] = 1.0
        _, double = layer_potentials_close(one, np.zeros(5, complex), table, fr)
        # analytic: Re[(1/2pi i) (log(wb) - log(wa))]
        expect = ((np.log(wb[0]) - np.log(wa[0])) / (2j * np.pi)).real
        assert double[0] == pytest.approx(expect, abs=1e-14)

    @pytest.mark.parametrize("mesh_name", ["simplex", "quarter"])
    def test_close_far_cross_validation_band(self, mesh_name, simplex_mesh,
                                             quarter_disk_mesh_unit):
        # both paths are valid in the 1.15 <= |xe| <= 1.3 band of each
        # panel; with order-16 fits the upsampled far rule resolves the
        # kernel to ~1e-13 there
        from newtpot.element import precompute_element
        mesh = simplex_mesh if mesh_name == "simplex" else quarter_disk_mesh_unit
        el = mesh.elements[0]
        tab = precompute_element(
            el, lambda x, y: np.exp(-np.asarray(x)**2 - np.asarray(y)**2), 16)
        rng = np.random.default_rng(4)
        for k in range(3):
            for panel in tab.panels[k]:
                fr, trace = panel.frame, panel.trace
                xe_band = ((1.15 + 0.15 * rng.random(40))
                           * np.exp(2j * np.pi * rng.random(40)))
                if fr.is_curved:
                    z_std = fr.center + fr.radius * xe_band
                else:
                    z_std = fr.mid + fr.half * xe_band
                z_phys = el.center + el.radius * z_std
                xe, wa, wb = fr.target_data(z_phys)
                if fr.is_curved:
                    table = cauchy_table_curved(fr, xe, trace.order, wa=wa, wb=wb)
                else:
                    table = cauchy_table_straight(xe, trace.order, wa=wa, wb=wb)
                s1, d1 = layer_potentials_close(trace.phi.coef,
                                                trace.sigma.coef, table, fr)
                s2, d2 = layer_potentials_far(panel.far_rule, z_std)
                assert np.abs(s1 - s2).max() < 1e-13
                assert np.abs(d1 - d2).max() < 1e-13
