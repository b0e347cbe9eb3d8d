import numpy as np
import pytest

from closurekm import _assign
from closurekm.baselines import (closure_recall, distance_ratio_histogram, distance_ratios,
                                 lloyd_run, lloyd_transition, recall_curve)
from closurekm.closure import initial_model
from closurekm.core import ClusterModel, Dataset
from closurekm.data_io import gen_gmm
from closurekm.rptree import NeighborhoodIndex, add_tree_to_index, build_tree


def argmin_oracle(points, centers, prev):
    """Nearest center by a scalar loop; keeps ``prev`` unless something is strictly closer."""
    out = np.empty(len(points), dtype=int)
    for i, x in enumerate(points):
        d = [float(((x - c) ** 2).sum()) for c in centers]
        best = int(np.argmin(d))  # first minimum, i.e. smallest id
        if prev is not None and d[prev[i]] <= d[best]:
            best = int(prev[i])
        out[i] = best
    return out


@pytest.fixture(scope="module")
def overlap():
    return gen_gmm(100, 20_000, 16, 1.0, 1.0, seed=1)


class TestLloyd:
    def test_square_corners(self):
        pts = np.array([[0, 0], [0, 1], [10, 0], [10, 1]], float)
        res = lloyd_run(Dataset(pts), np.array([[0.0, 0.0], [10.0, 0.0]]))
        assert res.history[-1].wcssd == 1.0
        assert len(res.history) - 1 <= 2
        np.testing.assert_array_equal(res.model.centers, [[0, 0.5], [10, 0.5]])

    def test_k_equals_n(self):
        pts = np.random.default_rng(0).normal(size=(15, 3))
        res = lloyd_run(Dataset(pts), pts)
        assert res.history[-1].wcssd == 0.0

    def test_one_iteration_against_oracle(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(400, 5))
        init = pts[rng.choice(400, 12, replace=False)]
        res = lloyd_run(Dataset(pts), init, max_iterations=1, keep_trajectory=True)
        z0 = argmin_oracle(pts, init, None)
        assert np.array_equal(res.trajectory[0][1], z0)
        means = np.array([pts[z0 == j].mean(axis=0) for j in range(12)])
        z1 = argmin_oracle(pts, means, z0)
        np.testing.assert_allclose(res.trajectory[0][0], means, rtol=1e-12)
        assert np.array_equal(res.trajectory[1][1], z1)

    def test_distance_counts(self):
        pts = np.random.default_rng(2).normal(size=(300, 4))
        res = lloyd_run(Dataset(pts), pts[:7], max_iterations=5, epsilon=0.0)
        assert res.history[0].distance_computations == 300 * 7
        assert all(h.distance_computations == 300 * 7 for h in res.history[1:])

    def test_monotone(self, overlap):
        init, _ = initial_model(overlap, 100, 0, 256)
        res = lloyd_run(overlap, init.centers, 30, init_assignments=init.assignments)
        js = [h.wcssd for h in res.history]
        assert all(b <= a * (1 + 1e-9) for a, b in zip(js, js[1:]))

    def test_bad_centers(self):
        with pytest.raises(ValueError):
            lloyd_run(Dataset(np.zeros((4, 2))), np.zeros((2, 3)))


class TestExactAssignment:
    @pytest.mark.parametrize("threads", [1, 3])
    def test_tie_heavy_grid(self, threads):
        # integer grid points and centers produce many exact ties
        g = np.arange(6, dtype=float)
        pts = np.array([[a, b] for a in g for b in g])
        centers = np.array([[1, 1], [1, 3], [3, 1], [3, 3], [2, 2], [5, 5]], float)
        rng = np.random.default_rng(3)
        prev = rng.integers(0, 6, size=len(pts))
        z, D, _ = _assign.exact_assignment(pts, centers, prev, threads=threads)
        assert np.array_equal(z, argmin_oracle(pts, centers, prev))
        np.testing.assert_array_equal(D, ((pts - centers[z]) ** 2).sum(axis=1))
        z0, _, _ = _assign.exact_assignment(pts, centers, None, threads=threads)
        assert np.array_equal(z0, argmin_oracle(pts, centers, None))

    def test_large_offset_cancellation(self):
        # big common offset makes the expanded form lose digits; result must stay exact
        rng = np.random.default_rng(4)
        pts = 1e6 + rng.normal(size=(3000, 8))
        centers = 1e6 + rng.normal(size=(20, 8))
        z, _, _ = _assign.exact_assignment(pts, centers, None)
        assert np.array_equal(z, argmin_oracle(pts, centers, None))


class TestHistogram:
    def test_no_active_points(self):
        ds = Dataset(np.random.default_rng(0).normal(size=(20, 2)))
        model = ClusterModel(np.zeros((2, 2)), np.zeros(20, dtype=int), np.zeros(20))
        edges, counts = distance_ratio_histogram(ds, model, model.assignments)
        assert counts.sum() == 0 and len(counts) == 20
        assert edges[0] == 0.0 and edges[-1] == 1.0

    def test_half_ratio_bin(self):
        ds = Dataset(np.array([[0.0, 0.0]]))
        model = ClusterModel(np.array([[2.0, 0.0], [0.0, 1.0]]), np.array([0]), np.zeros(1))
        edges, counts = distance_ratio_histogram(ds, model, np.array([1]), bins=10)
        assert counts.tolist() == [0, 0, 0, 0, 0, 1, 0, 0, 0, 0]
        assert edges[5] == 0.5

    def test_ratios_in_unit_interval(self, overlap):
        prev, nxt = lloyd_transition(overlap, 100, 2, seed=0)
        r = distance_ratios(overlap, prev, nxt)
        assert r.size > 0
        assert np.all((r >= 0) & (r <= 1))

    def test_overlapping_mixture_concentrates(self, overlap):
        prev, nxt = lloyd_transition(overlap, 100, 2, seed=0)
        r = distance_ratios(overlap, prev, nxt)
        assert (r < 0.15).mean() >= 0.9


class TestRecall:
    def test_complete_index(self, overlap):
        prev, nxt = lloyd_transition(overlap, 100, 2, seed=0)
        full = add_tree_to_index(NeighborhoodIndex.empty(overlap.n),
                                 build_tree(overlap, overlap.n, seed=0))
        assert closure_recall(overlap, prev, nxt, full) == 1.0

    def test_singletons(self, overlap):
        prev, nxt = lloyd_transition(overlap, 100, 2, seed=0)
        assert closure_recall(overlap, prev, nxt, NeighborhoodIndex.empty(overlap.n)) == 0.0

    def test_no_active_points(self, overlap):
        prev, _ = lloyd_transition(overlap, 100, 2, seed=0)
        idx = NeighborhoodIndex.empty(overlap.n)
        assert closure_recall(overlap, prev, prev.assignments, idx) == 1.0

    def test_matches_set_oracle(self):
        ds = gen_gmm(10, 600, 3, 1.0, 1.0, seed=2)
        prev, nxt = lloyd_transition(ds, 10, 2, seed=0)
        idx = NeighborhoodIndex.empty(ds.n)
        for s in (1, 2):
            idx = add_tree_to_index(idx, build_tree(ds, 8, seed=s))
        active = np.flatnonzero(prev.assignments != nxt)
        hits = [nxt[i] in {int(prev.assignments[j]) for j in idx.neighbors(i)} for i in active]
        assert closure_recall(ds, prev, nxt, idx) == pytest.approx(np.mean(hits))

    def test_curve_monotone_and_high(self, overlap):
        prev, nxt = lloyd_transition(overlap, 100, 2, seed=0)
        pts = recall_curve(overlap, prev, nxt, 10, range(1, 13), seed=0)
        rec = [p.recall for p in pts]
        assert all(b >= a for a, b in zip(rec, rec[1:]))
        sizes = [p.mean_neighborhood for p in pts]
        assert all(b > a for a, b in zip(sizes, sizes[1:]))
        assert all(p.max_neighborhood <= 10 * p.tree_count for p in pts)
        near50 = min(pts, key=lambda p: abs(p.mean_neighborhood - 50))
        assert near50.recall >= 0.9
