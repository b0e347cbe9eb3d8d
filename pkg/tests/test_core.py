import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from closurekm.core import (ClusterModel, Dataset, distance_ratio, nmi,
                            squared_euclidean, update_centers, wcssd)


def naive_sqdist(a, b):
    s = 0.0
    for x, y in zip(a, b):
        s += (float(x) - float(y)) ** 2
    return s


def naive_wcssd(points, centers, z):
    total = 0.0
    for i in range(len(points)):
        for t in range(points.shape[1]):
            total += (points[i, t] - centers[z[i], t]) ** 2
    return total


def naive_nmi(a, b):
    n = len(a)
    ca, cb = sorted(set(a)), sorted(set(b))
    pa = {u: sum(1 for v in a if v == u) / n for u in ca}
    pb = {u: sum(1 for v in b if v == u) / n for u in cb}
    mi = 0.0
    for u in ca:
        for v in cb:
            pj = sum(1 for x, y in zip(a, b) if x == u and y == v) / n
            if pj > 0:
                mi += pj * math.log(pj / (pa[u] * pb[v]))
    ha = -sum(p * math.log(p) for p in pa.values())
    hb = -sum(p * math.log(p) for p in pb.values())
    return mi / math.sqrt(ha * hb)


class TestDataset:
    def test_shape_and_dtype(self):
        ds = Dataset(np.array([[1, 2], [3, 4]], dtype=np.float32), [0, 1])
        assert (ds.n, ds.d) == (2, 2)
        assert ds.points.dtype == np.float64

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="empty dataset"):
            Dataset(np.zeros((0, 3)))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="point 1"):
            Dataset(np.array([[0.0], [np.nan]]))

    def test_label_count(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2)), [0, 1])


class TestSquaredEuclidean:
    def test_hand_value(self):
        assert squared_euclidean([0, 0], [3, 4]) == 25.0

    def test_identity(self):
        x = np.random.default_rng(0).normal(size=7)
        assert squared_euclidean(x, x) == 0.0

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a, b = rng.normal(size=16), rng.normal(size=16)
            assert squared_euclidean(a, b) == pytest.approx(naive_sqdist(a, b), rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            squared_euclidean([0, 0], [0, 0, 0])

    # coordinates either 0 or far from the underflow range, so squares never flush to 0
    coord = st.floats(-1e6, 1e6).filter(lambda v: v == 0 or abs(v) > 1e-100)

    @given(st.lists(coord, min_size=1, max_size=12).flatmap(
        lambda a: st.tuples(st.just(a), st.lists(TestSquaredEuclidean.coord,
                                                 min_size=len(a), max_size=len(a)))))
    def test_symmetric_and_zero_iff_equal(self, pair):
        a, b = pair
        assert squared_euclidean(a, b) == squared_euclidean(b, a)
        assert (squared_euclidean(a, b) == 0.0) == (a == b)


class TestWCSSD:
    def test_two_points(self):
        ds = Dataset(np.array([[0.0, 0.0], [2.0, 0.0]]))
        m = ClusterModel(np.array([[1.0, 0.0]]), np.array([0, 0]), np.zeros(2))
        assert wcssd(ds, m) == 2.0

    def test_own_cluster_zero(self):
        pts = np.random.default_rng(2).normal(size=(30, 4))
        m = ClusterModel(pts.copy(), np.arange(30), np.zeros(30))
        assert wcssd(Dataset(pts), m) == 0.0

    def test_matches_double_loop(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(1000, 5))
        centers = rng.normal(size=(10, 5))
        z = rng.integers(0, 10, size=1000)
        m = ClusterModel(centers, z, np.zeros(1000))
        assert wcssd(Dataset(pts), m) == pytest.approx(naive_wcssd(pts, centers, z), rel=1e-9)

    def test_invalid_assignment(self):
        ds = Dataset(np.zeros((2, 2)))
        with pytest.raises(ValueError, match="outside"):
            wcssd(ds, ClusterModel(np.zeros((1, 2)), np.array([0, 1]), np.zeros(2)))

    def test_nonnegative_zero_iff_coincident(self):
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(20, 3))
        centers = pts[:5].copy()
        z = np.arange(20) % 5
        m = ClusterModel(centers, z, np.zeros(20))
        assert wcssd(Dataset(pts), m) > 0
        m.assignments = np.array([0, 1, 2, 3, 4] * 4)
        dup = Dataset(np.tile(pts[:5], (4, 1)))
        assert wcssd(dup, m) == 0.0


class TestUpdateCenters:
    def test_mean(self):
        ds = Dataset(np.array([[0.0, 0.0], [2.0, 2.0], [5.0, 7.0]]))
        centers, empty = update_centers(ds, [0, 0, 1], 3)
        np.testing.assert_array_equal(centers[0], [1.0, 1.0])
        np.testing.assert_array_equal(centers[1], [5.0, 7.0])
        assert empty == [2]
        assert np.all(np.isnan(centers[2]))

    def test_empty_keeps_previous(self):
        ds = Dataset(np.array([[1.0], [3.0]]))
        prev = np.array([[9.0], [8.0]])
        centers, empty = update_centers(ds, [0, 0], 2, prev)
        assert empty == [1]
        assert centers[1, 0] == 8.0

    def test_matches_naive_mean(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(500, 6))
        z = rng.integers(0, 17, size=500)
        centers, empty = update_centers(Dataset(pts), z, 17)
        for j in range(17):
            np.testing.assert_allclose(centers[j], pts[z == j].mean(axis=0), rtol=1e-12)

    @pytest.mark.parametrize("threads", [2, 3, 8])
    def test_thread_count_does_not_change_bits(self, threads):
        rng = np.random.default_rng(6)
        pts = rng.normal(size=(2000, 8))
        z = rng.integers(0, 40, size=2000)
        a, _ = update_centers(Dataset(pts), z, 40)
        b, _ = update_centers(Dataset(pts), z, 40, threads=threads)
        np.testing.assert_array_equal(a, b)

    def test_mean_beats_random_alternatives(self):
        rng = np.random.default_rng(7)
        pts = rng.normal(size=(40, 3))
        z = np.zeros(40, dtype=int)
        centers, _ = update_centers(Dataset(pts), z, 1)
        best = naive_wcssd(pts, centers, z)
        for _ in range(100):
            alt = centers + rng.normal(scale=rng.uniform(1e-3, 3), size=(1, 3))
            assert best <= naive_wcssd(pts, alt, z) * (1 + 1e-12)


class TestNMI:
    def test_identical(self):
        assert nmi([0, 0, 1, 1, 2], [5, 5, 3, 3, 9]) == pytest.approx(1.0)

    def test_independent(self):
        assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-15)

    def test_contingency_oracle(self):
        # H(a) = ln 2, H(b) = ln 4 - (3/4) ln 3, I = H(b) - (1/2) ln 2 by hand
        ha = math.log(2)
        hb = -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))
        mi = hb - 0.5 * math.log(2)
        expected = mi / math.sqrt(ha * hb)
        assert nmi([0, 0, 1, 1], [0, 0, 0, 1]) == pytest.approx(expected, abs=1e-12)
        assert nmi([0, 0, 1, 1], [0, 0, 0, 1]) == pytest.approx(
            naive_nmi([0, 0, 1, 1], [0, 0, 0, 1]), abs=1e-12)

    def test_degenerate_single_class(self):
        assert nmi([1, 1, 1], [4, 4, 4]) == 1.0
        assert nmi([1, 1, 1], [0, 1, 1]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            nmi([0, 1], [0])

    @settings(max_examples=60)
    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=2, max_size=60))
    def test_symmetric_bounded_relabel_invariant(self, pairs):
        a = [p[0] for p in pairs]
        b = [p[1] for p in pairs]
        v = nmi(a, b)
        assert 0.0 <= v <= 1.0
        assert v == pytest.approx(nmi(b, a), abs=1e-12)
        relabel = {0: 7, 1: 3, 2: 11, 3: 0, 4: 5}
        assert v == pytest.approx(nmi([relabel[x] for x in a], b), abs=1e-12)
        if len(set(a)) > 1 and len(set(b)) > 1:
            assert v == pytest.approx(naive_nmi(a, b), abs=1e-9)


class TestDistanceRatio:
    def test_equal_distances(self):
        assert distance_ratio([0, 0], [1, 0], [-1, 0]) == 0.0

    def test_at_new_center(self):
        assert distance_ratio([2, 2], [0, 0], [2, 2]) == 1.0

    def test_half(self):
        assert distance_ratio([0, 0], [2, 0], [0, 1]) == 0.5

    def test_not_active(self):
        with pytest.raises(ValueError):
            distance_ratio([1, 1], [1, 1], [0, 0])
