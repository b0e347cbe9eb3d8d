"""Exact Lloyd iterations and the geometry diagnostics measured on them.

Lloyd's algorithm is both the user-facing baseline and the oracle that the
closure algorithm must match when neighborhoods cover the whole dataset.
The diagnostics look at which points change cluster between two exact
iterations: how close to a cell boundary they sit (distance ratio) and
whether a given neighborhood index would have offered the right cluster
(closure recall).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from . import _assign, _kernels
from .closure import check_monotone, initial_model, reduction_rate, tree_seed
from .core import ClusterModel, Dataset, IterationStats, update_centers
from .rptree import (DEFAULT_SAMPLE_SIZE, NeighborhoodIndex, add_tree_to_index,
                     build_tree)


@dataclass
class LloydResult:
    model: ClusterModel
    history: list[IterationStats]
    # (centers, assignments) after every iteration when requested
    trajectory: Optional[list[tuple[np.ndarray, np.ndarray]]] = None


def lloyd_run(dataset: Dataset, init_centers: np.ndarray, max_iterations: int = 100,
              epsilon: float = 1e-4, init_assignments: Optional[np.ndarray] = None,
              threads: int = 1, keep_trajectory: bool = False) -> LloydResult:
    """Exact k-means from the given centers.

    Without ``init_assignments`` every point first goes to its nearest
    initial center and the centers move to the resulting means; that pass is
    recorded in the iteration-0 row.  Stops when
    the relative objective drop falls below ``epsilon`` or after
    ``max_iterations`` assignment/update rounds.
    """
    start = time.perf_counter()
    X = dataset.points
    C = np.array(init_centers, dtype=np.float64, copy=True)
    k = C.shape[0]
    if C.ndim != 2 or C.shape[1] != dataset.d:
        raise ValueError(f"centers shape {C.shape} does not match d={dataset.d}")
    if not 1 <= k <= dataset.n:
        raise ValueError(f"k={k} must lie in [1, n={dataset.n}]")
    if init_assignments is None:
        z, D, evals0 = _assign.exact_assignment(X, C, None, threads=threads)
        C, empty = update_centers(dataset, z, k, C, threads)
        D = _assign.settle_centers(X, init_centers, C, z, D, empty, threads)
        if empty:
            _assign.repair_empty(X, C, z, D, empty)
    else:
        z = np.array(init_assignments, dtype=np.int64, copy=True)
        D = _assign.assigned_distances(X, C, z, threads)
        evals0 = 0
    model = ClusterModel(C, z, D)
    history = [IterationStats(0, float(D.sum()), evals0, 0, 0,
                              time.perf_counter() - start)]
    trajectory = [(C.copy(), z.copy())] if keep_trajectory else None
    prev_j = history[0].wcssd
    for t in range(1, max_iterations + 1):
        z_new, D_new, evals = _assign.exact_assignment(X, model.centers, model.assignments,
                                                   threads=threads)
        active = int(np.count_nonzero(z_new != model.assignments))
        model.assignments = z_new
        centers, empty = update_centers(dataset, z_new, k, model.centers, threads)
        model.distances = _assign.settle_centers(X, model.centers, centers, z_new, D_new,
                                                 empty, threads)
        model.centers = centers
        if empty:
            _assign.repair_empty(X, centers, z_new, model.distances, empty)
        cur_j = float(model.distances.sum())
        check_monotone(prev_j, cur_j, t)
        history.append(IterationStats(t, cur_j, evals, active, 0,
                                      time.perf_counter() - start,
                                      max_candidates=k, empty_clusters=len(empty)))
        if keep_trajectory:
            trajectory.append((model.centers.copy(), model.assignments.copy()))
        rho = math.inf if t == 1 else reduction_rate(prev_j, cur_j)
        prev_j = cur_j
        if rho < epsilon:
            break
    return LloydResult(model, history, trajectory)


def lloyd_transition(dataset: Dataset, k: int, iteration: int, seed: int = 0,
                     sample_size: int = DEFAULT_SAMPLE_SIZE,
                     threads: int = 1) -> tuple[ClusterModel, np.ndarray]:
    """State entering exact iteration ``iteration`` and the assignments it produces.

    Starts from the random-partition-tree initialization.  Returns the model
    after ``iteration - 1`` full rounds and the exact assignment computed
    against its centers.
    """
    if iteration < 1:
        raise ValueError("iteration must be >= 1")
    init, _ = initial_model(dataset, k, seed, sample_size)
    res = lloyd_run(dataset, init.centers, iteration - 1, epsilon=0.0,
                    init_assignments=init.assignments, threads=threads)
    prev = res.model
    z_next, _, _ = _assign.exact_assignment(dataset.points, prev.centers,
                                            prev.assignments, threads=threads)
    return prev, z_next


def distance_ratios(dataset: Dataset, prev_model: ClusterModel,
                    next_assignments: np.ndarray) -> np.ndarray:
    """``1 - d(x, c_new) / d(x, c_old)`` for every active point, old centers throughout."""
    z_prev = prev_model.assignments
    z_next = np.asarray(next_assignments)
    active = np.flatnonzero(z_prev != z_next)
    if active.size == 0:
        return np.empty(0)
    X = dataset.points[active]
    d_old = np.sqrt(((X - prev_model.centers[z_prev[active]]) ** 2).sum(axis=1))
    d_new = np.sqrt(((X - prev_model.centers[z_next[active]]) ** 2).sum(axis=1))
    if np.any(d_old == 0.0):
        raise ValueError("an active point coincides with its previous center")
    return 1.0 - d_new / d_old


def distance_ratio_histogram(dataset: Dataset, prev_model: ClusterModel,
                             next_assignments: np.ndarray,
                             bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of active-point distance ratios on ``[0, 1]``; returns ``(edges, counts)``."""
    r = distance_ratios(dataset, prev_model, next_assignments)
    counts, edges = np.histogram(r, bins=bins, range=(0.0, 1.0))
    return edges, counts


def closure_recall(dataset: Dataset, prev_model: ClusterModel,
                   lloyd_next_assignments: np.ndarray,
                   index: NeighborhoodIndex) -> float:
    """Fraction of active points whose exact new cluster appears among their neighbors' clusters."""
    z_prev = np.ascontiguousarray(prev_model.assignments, dtype=np.int64)
    z_next = np.ascontiguousarray(lloyd_next_assignments, dtype=np.int64)
    active = np.flatnonzero(z_prev != z_next)
    if active.size == 0:
        return 1.0
    if index.complete:
        present = np.bincount(z_prev, minlength=prev_model.k) > 0
        return float(present[z_next[active]].mean())
    hit = _kernels.covered_by_closure(index.indptr, index.nbrs, z_prev, z_next, active)
    return float(hit.mean())


@dataclass
class RecallPoint:
    tree_count: int
    mean_neighborhood: float
    max_neighborhood: int
    recall: float


def recall_curve(dataset: Dataset, prev_model: ClusterModel,
                 lloyd_next_assignments: np.ndarray, bucket_capacity: int,
                 tree_counts: Iterable[int], seed: int = 0,
                 sample_size: int = DEFAULT_SAMPLE_SIZE) -> list[RecallPoint]:
    """Closure recall as trees are united one at a time.

    Trees are the same streams :func:`closure.run` would build, so the curve
    for ``m`` trees describes exactly the neighborhoods a closure run uses.
    """
    wanted = sorted(set(int(m) for m in tree_counts))
    index = NeighborhoodIndex.empty(dataset.n)
    out = []
    for m in range(1, wanted[-1] + 1 if wanted else 1):
        tree = build_tree(dataset, bucket_capacity, sample_size, tree_seed(seed, m))
        index = add_tree_to_index(index, tree)
        if m in wanted:
            sizes = index.sizes()
            out.append(RecallPoint(m, float(sizes.mean()), int(sizes.max()),
                                   closure_recall(dataset, prev_model,
                                                  lloyd_next_assignments, index)))
    return out
