import numpy as np
import pytest

from newtpot import fastsum
from newtpot.errors import NewtpotError
from newtpot.fastsum import (QuadTree, SourceSet, direct_sum,
                             merge_shared_sources, tree_sum)


def random_sources(n, rng, n_owners=50):
    return SourceSet(
        pos=rng.random(n) + 1j * rng.random(n),
        charge=rng.standard_normal(n),
        dipole=0.3 * (rng.standard_normal(n) + 1j * rng.standard_normal(n)),
        owner=rng.integers(0, n_owners, n))


class TestDirectSum:
    def test_log_kernel_normalization(self):
        s = SourceSet(pos=np.array([0.0j]), charge=np.array([2 * np.pi]),
                      dipole=np.array([0.0j]), owner=np.array([0]))
        v = direct_sum(s, np.array([np.e + 0.0j]))
        assert v[0] == pytest.approx(1.0, abs=1e-15)

    def test_all_excluded_gives_zero(self):
        s = SourceSet(pos=np.array([0.0j]), charge=np.array([1.0]),
                      dipole=np.array([1.0 + 1.0j]), owner=np.array([7]))
        v = direct_sum(s, np.array([1.0 + 0.0j]), exclusion=[{7}])
        assert v[0] == 0.0

    def test_coincident_included_source_errors(self):
        s = SourceSet(pos=np.array([0.5 + 0.5j]), charge=np.array([1.0]),
                      dipole=np.array([0.0j]), owner=np.array([0]))
        with pytest.raises(NewtpotError):
            direct_sum(s, np.array([0.5 + 0.5j]))
        # but an excluded coincident source is fine
        v = direct_sum(s, np.array([0.5 + 0.5j]), exclusion=[{0}])
        assert v[0] == 0.0

    def test_empty_cases(self):
        s = SourceSet(pos=np.array([], complex), charge=np.array([]),
                      dipole=np.array([], complex), owner=np.array([], int))
        assert len(direct_sum(s, np.array([1.0 + 1.0j]))) == 1
        rng = np.random.default_rng(0)
        assert len(direct_sum(random_sources(5, rng), np.array([], complex))) == 0


class TestTreeSum:
    def test_small_case_degenerates_to_direct(self):
        rng = np.random.default_rng(1)
        s = random_sources(10, rng)
        t = rng.random(50) + 1j * rng.random(50) + 2.0
        assert np.abs(tree_sum(s, t, p=12) - direct_sum(s, t)).max() < 1e-12

    def test_backend_equivalence_10k(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            s = random_sources(10000, rng)
            t = (rng.random(500) * 1.4 - 0.2) + 1j * (rng.random(500) * 1.4 - 0.2)
            d = direct_sum(s, t)
            tr = tree_sum(s, t, p=30)
            scale = max(np.abs(d).max(), 1.0)
            assert np.abs(tr - d).max() <= 1e-9 * scale

    def test_exclusion_matches_direct(self):
        rng = np.random.default_rng(3)
        s = random_sources(5000, rng, n_owners=30)
        # clustered targets sitting right among the sources, heavy near lists
        t = s.pos[rng.integers(0, 5000, 300)] + 1e-4 * (rng.random(300) + 1j)
        excl = [set(rng.integers(0, 30, 5).tolist()) for _ in range(len(t))]
        d = direct_sum(s, t, exclusion=excl)
        tr = tree_sum(s, t, exclusion=excl, p=30)
        assert np.abs(tr - d).max() < 1e-9 * max(np.abs(d).max(), 1.0)

    def test_minimum_order_enforced(self):
        rng = np.random.default_rng(0)
        with pytest.raises(NewtpotError):
            tree_sum(random_sources(10, rng), np.array([5.0 + 5.0j]), p=5)

    def test_empty(self):
        s = SourceSet(pos=np.array([], complex), charge=np.array([]),
                      dipole=np.array([], complex), owner=np.array([], int))
        out = tree_sum(s, np.array([1.0 + 1.0j, 2.0j]))
        assert np.all(out == 0.0)


class TestMergedSources:
    def test_merge_halves_shared_nodes(self):
        rng = np.random.default_rng(5)
        base = random_sources(400, rng, n_owners=10)
        dup = SourceSet(pos=np.concatenate([base.pos, base.pos[:200]]),
                        charge=np.concatenate([base.charge,
                                               rng.standard_normal(200)]),
                        dipole=np.concatenate([base.dipole,
                                               0.1j * rng.standard_normal(200)]),
                        owner=np.concatenate([base.owner,
                                              rng.integers(10, 20, 200)]))
        merged = merge_shared_sources(dup)
        assert len(merged) == 400
        assert merged.parts is dup

    def test_merged_equivalence_with_and_without_exclusion(self):
        rng = np.random.default_rng(6)
        base = random_sources(2000, rng, n_owners=12)
        dup = SourceSet(pos=np.concatenate([base.pos, base.pos[:1000]]),
                        charge=np.concatenate([base.charge,
                                               rng.standard_normal(1000)]),
                        dipole=np.concatenate([base.dipole,
                                               0.2 * rng.standard_normal(1000) * 1j]),
                        owner=np.concatenate([base.owner,
                                              rng.integers(12, 24, 1000)]))
        merged = merge_shared_sources(dup)
        t = (rng.random(200) * 2 - 0.5) + 1j * (rng.random(200) * 2 - 0.5)
        excl = [set(rng.integers(0, 24, 3).tolist()) for _ in range(len(t))]
        for exclusion in (None, excl):
            v_merged = tree_sum(merged, t, exclusion=exclusion, p=25)
            v_plain = tree_sum(dup, t, exclusion=exclusion, p=25)
            assert np.abs(v_merged - v_plain).max() < 1e-12 * max(
                np.abs(v_plain).max(), 1.0)


class TestQuadTree:
    def test_every_point_indexed_once(self):
        rng = np.random.default_rng(9)
        pts = rng.random(1000) + 1j * rng.random(1000)
        tree = QuadTree(pts, leaf_cap=16)
        seen = np.zeros(1000, dtype=int)
        for leaf in tree.leaves():
            seen[tree.order[leaf.start:leaf.end]] += 1
        assert np.all(seen == 1)

    def test_box_containment(self):
        rng = np.random.default_rng(10)
        pts = rng.random(500) + 1j * rng.random(500)
        tree = QuadTree(pts, leaf_cap=8)
        for box in tree.boxes:
            sub = tree.points[box.start:box.end]
            if len(sub):
                assert np.abs(sub.real - box.center.real).max() <= box.half * (1 + 1e-9)
                assert np.abs(sub.imag - box.center.imag).max() <= box.half * (1 + 1e-9)
