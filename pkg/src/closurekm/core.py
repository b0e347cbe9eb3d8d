"""Vector math, the k-means objective, the mean update and quality metrics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels


@dataclass
class Dataset:
    """Dense ``n x d`` point matrix with optional integer class labels."""

    points: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError(f"points must be 2-D, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("empty dataset")
        if pts.shape[1] < 1:
            raise ValueError("points must have at least one coordinate")
        if not np.all(np.isfinite(pts)):
            bad = int(np.argwhere(~np.isfinite(pts))[0, 0])
            raise ValueError(f"non-finite coordinate in point {bad}")
        self.points = pts
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (pts.shape[0],):
                raise ValueError(
                    f"expected {pts.shape[0]} labels, got {labels.shape[0]}")
            self.labels = labels

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass
class ClusterModel:
    centers: np.ndarray
    assignments: np.ndarray
    distances: np.ndarray

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    def copy(self) -> "ClusterModel":
        return ClusterModel(self.centers.copy(), self.assignments.copy(),
                            self.distances.copy())


@dataclass
class IterationStats:
    iteration: int
    wcssd: float
    distance_computations: int
    active_points: int
    tree_count: int
    elapsed: float
    max_candidates: int = 0
    tree_added: bool = False
    empty_clusters: int = 0

    CSV_COLUMNS = ("iteration", "wcssd", "distance_computations",
                   "active_points", "tree_count", "elapsed_seconds")

    def csv_row(self) -> list:
        return [self.iteration, repr(float(self.wcssd)),
                self.distance_computations, self.active_points,
                self.tree_count, f"{self.elapsed:.6f}"]


def squared_euclidean(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(_kernels.sqdist(a, b))


def _check_assignments(assignments: np.ndarray, n: int, k: int) -> np.ndarray:
    z = np.asarray(assignments)
    if z.shape != (n,):
        raise ValueError(f"expected {n} assignments, got shape {z.shape}")
    if n and (z.min() < 0 or z.max() >= k):
        bad = int(np.flatnonzero((z < 0) | (z >= k))[0])
        raise ValueError(
            f"assignment {int(z[bad])} of point {bad} outside [0, {k})")
    return z.astype(np.int64, copy=False)


def point_costs(points: np.ndarray, centers: np.ndarray,
                assignments: np.ndarray) -> np.ndarray:
    """Squared distance of every point to its assigned center."""
    diff = points - centers[assignments]
    return np.einsum("ij,ij->i", diff, diff)


def wcssd(dataset: Dataset, model: ClusterModel) -> float:
    """Within-cluster sum of squared distortions of ``model`` on ``dataset``."""
    z = _check_assignments(model.assignments, dataset.n, model.k)
    return float(point_costs(dataset.points, model.centers, z).sum())


def split_ranges(n: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, n)) if n else 1
    edges = np.linspace(0, n, parts + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def run_ranges(fn: Callable[[int, int], object], n: int, threads: int = 1) -> list:
    """Call ``fn(start, stop)`` over disjoint ranges covering ``0:n``.

    Results come back in range order so reductions are deterministic.
    """
    ranges = split_ranges(n, threads)
    if threads <= 1 or len(ranges) == 1:
        return [fn(a, b) for a, b in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: fn(*r), ranges))


def update_centers(dataset: Dataset, assignments, k: int,
                   prev_centers: Optional[np.ndarray] = None,
                   threads: int = 1) -> tuple[np.ndarray, list[int]]:
    """Recompute every center as the mean of its members.

    Clusters without members are returned in the second element. Their rows
    are copied from ``prev_centers`` when given and are NaN otherwise.

    Each cluster is summed in ascending point order by a single worker, so
    the result does not depend on ``threads``.
    """
    X = dataset.points
    z = _check_assignments(assignments, dataset.n, k)
    order = np.argsort(z, kind="stable")
    counts = np.bincount(z, minlength=k)
    bounds = np.zeros(k + 1, dtype=np.int64)
    np.cumsum(counts, out=bounds[1:])
    sums = np.empty((k, dataset.d), dtype=np.float64)
    run_ranges(lambda lo, hi: _kernels.cluster_sums(X, order, bounds, lo, hi, sums),
               k, threads)
    empty = np.flatnonzero(counts == 0)
    centers = np.empty_like(sums)
    nonempty = counts > 0
    centers[nonempty] = sums[nonempty] / counts[nonempty, None]
    if prev_centers is not None:
        centers[empty] = prev_centers[empty]
    else:
        centers[empty] = np.nan
    return centers, [int(j) for j in empty]


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(labels_a: Sequence[int], labels_b: Sequence[int]) -> float:
    """Normalized mutual information ``I(a, b) / sqrt(H(a) H(b))``.

    When either partition has a single class the ratio is undefined; the
    result is then 1.0 if both describe the same partition and 0.0 otherwise.
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n < 1:
        raise ValueError("nmi needs at least one sample")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    ka, kb = ia.max() + 1, ib.max() + 1
    table = np.zeros((ka, kb), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    ha = _entropy(table.sum(axis=1), n)
    hb = _entropy(table.sum(axis=0), n)
    if ha == 0.0 or hb == 0.0:
        return 1.0 if ka == kb else 0.0
    nz = table > 0
    joint = table[nz] / n
    pa = table.sum(axis=1)[:, None].repeat(kb, axis=1)[nz] / n
    pb = table.sum(axis=0)[None, :].repeat(ka, axis=0)[nz] / n
    mi = float((joint * np.log(joint / (pa * pb))).sum())
    return min(1.0, max(0.0, mi / math.sqrt(ha * hb)))


def distance_ratio(x, c_old, c_new) -> float:
    """``1 - d(x, c_new) / d(x, c_old)`` with plain Euclidean distances."""
    d_old = math.sqrt(squared_euclidean(x, c_old))
    if d_old == 0.0:
        raise ValueError("point coincides with its old center; it cannot be active")
    d_new = math.sqrt(squared_euclidean(x, c_new))
    return 1.0 - d_new / d_old
