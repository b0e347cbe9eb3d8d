"""Approximate k-means driven by cluster closures.

Each point is compared only against the clusters that currently own one of
its neighbors, where neighbors are points sharing a leaf in any of the
random partition trees built so far.  Whenever the relative drop of the
objective stalls, one more tree is united into the neighborhoods.
"""

from __future__ import annotations

import json
import logging
import math
import struct
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import _assign
from .core import ClusterModel, Dataset, IterationStats, update_centers
from .rptree import (DEFAULT_SAMPLE_SIZE, NeighborhoodIndex, RPTree,
                     add_tree_to_index, build_partition, build_tree)

log = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-9


class MonotonicityError(RuntimeError):
    """The objective went up between two iterations."""


@dataclass
class ClosureConfig:
    k: int
    bucket_capacity: int = 10
    max_trees: int = 10
    reduction_threshold: float = 0.01
    max_iterations: int = 100
    convergence_epsilon: float = 1e-4
    seed: int = 0
    pca_sample_size: int = DEFAULT_SAMPLE_SIZE
    threads: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.bucket_capacity < 2:
            raise ValueError("bucket_capacity must be >= 2")
        if self.max_trees < 1:
            raise ValueError("max_trees must be >= 1")
        if self.reduction_threshold < 0 or self.convergence_epsilon < 0:
            raise ValueError("thresholds must be non-negative")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class ClosureState:
    model: ClusterModel
    index: NeighborhoodIndex
    trees: list[RPTree] = field(default_factory=list)
    history: list[IterationStats] = field(default_factory=list)
    init_tree: Optional[RPTree] = None

    @property
    def tree_count(self) -> int:
        return len(self.trees)


def tree_seed(seed: int, ordinal: int) -> np.random.Generator:
    """Random stream of the ``ordinal``-th neighborhood tree (0 = init partition)."""
    return np.random.default_rng([seed, ordinal])


def initial_model(dataset: Dataset, k: int, seed: int = 0,
                  sample_size: int = DEFAULT_SAMPLE_SIZE) -> tuple[ClusterModel, RPTree]:
    """Clusters = leaves of a random partition tree grown to exactly ``k`` leaves."""
    if k > dataset.n:
        raise ValueError(f"k={k} exceeds the number of points n={dataset.n}")
    tree = build_partition(dataset, k, sample_size, tree_seed(seed, 0))
    z = tree.leaf_of.copy()
    centers, empty = update_centers(dataset, z, k)
    assert not empty
    D = _assign.assigned_distances(dataset.points, centers, z)
    return ClusterModel(centers, z, D), tree


def _add_tree(state: ClosureState, dataset: Dataset, config: ClosureConfig) -> None:
    tree = build_tree(dataset, config.bucket_capacity, config.pca_sample_size,
                      tree_seed(config.seed, state.tree_count + 1))
    state.trees.append(tree)
    state.index = add_tree_to_index(state.index, tree)


def initialize(dataset: Dataset, config: ClosureConfig) -> ClosureState:
    start = time.perf_counter()
    model, init_tree = initial_model(dataset, config.k, config.seed,
                                     config.pca_sample_size)
    state = ClosureState(model, NeighborhoodIndex.empty(dataset.n), init_tree=init_tree)
    _add_tree(state, dataset, config)
    state.history.append(IterationStats(
        iteration=0, wcssd=float(model.distances.sum()), distance_computations=0,
        active_points=0, tree_count=state.tree_count,
        elapsed=time.perf_counter() - start))
    return state


def active_points(prev, nxt) -> np.ndarray:
    """Indices whose assignment differs between two assignment vectors."""
    prev = np.asarray(prev)
    nxt = np.asarray(nxt)
    if prev.shape != nxt.shape:
        raise ValueError(f"length mismatch: {prev.shape} vs {nxt.shape}")
    return np.flatnonzero(prev != nxt)


def closure_assignment_step(state: ClosureState, dataset: Dataset, threads: int = 1):
    """One closure-restricted assignment pass; updates ``state.model`` in place.

    Returns ``(active_count, distance_evaluations, max_candidates)``.
    """
    m = state.model
    z, D, n_cand, evals = _assign.closure_assignment(
        dataset.points, m.centers, m.assignments, state.index, threads)
    active = int(np.count_nonzero(z != m.assignments))
    m.assignments, m.distances = z, D
    return active, evals, int(n_cand.max())


def repair_empty_clusters(state: ClosureState, dataset: Dataset, empty) -> None:
    """Reseed empty clusters at the farthest points (largest ``D``), ascending id."""
    m = state.model
    _assign.repair_empty(dataset.points, m.centers, m.assignments, m.distances, empty)


def update_step(state: ClosureState, dataset: Dataset, threads: int = 1) -> list[int]:
    """Move centers to member means, then repair empties.

    ``D`` must hold distances to the old centers of the current
    assignments; it is refreshed against the new centers.  Returns the ids that were
    empty before repair.
    """
    m = state.model
    centers, empty = update_centers(dataset, m.assignments, m.k, m.centers, threads)
    m.distances = _assign.settle_centers(dataset.points, m.centers, centers, m.assignments,
                                         m.distances, empty, threads)
    m.centers = centers
    if empty:
        repair_empty_clusters(state, dataset, empty)
    return empty


def reduction_rate(prev: float, cur: float) -> float:
    if prev <= 0.0:
        return 0.0
    return (prev - cur) / prev


def check_monotone(prev: float, cur: float, iteration: int) -> None:
    if cur > prev * (1.0 + MONOTONE_SLACK):
        raise MonotonicityError(
            f"objective rose from {prev!r} to {cur!r} at iteration {iteration}")


def run(dataset: Dataset, config: ClosureConfig) -> ClosureState:
    """Full closure k-means run with adaptive tree addition."""
    start = time.perf_counter()
    state = initialize(dataset, config)
    threads = config.threads
    prev_j = state.history[0].wcssd
    for t in range(1, config.max_iterations + 1):
        trees_used = state.tree_count
        active, evals, max_cand = closure_assignment_step(state, dataset, threads)
        empty = update_step(state, dataset, threads)
        cur_j = float(state.model.distances.sum())
        check_monotone(prev_j, cur_j, t)
        rho = math.inf if t == 1 else reduction_rate(prev_j, cur_j)
        saturated = state.tree_count >= config.max_trees or state.index.complete
        stop = rho < config.convergence_epsilon and saturated
        added = False
        if not stop and rho < config.reduction_threshold and not saturated:
            _add_tree(state, dataset, config)
            added = True
        state.history.append(IterationStats(
            iteration=t, wcssd=cur_j, distance_computations=evals,
            active_points=active, tree_count=trees_used,
            elapsed=time.perf_counter() - start,
            max_candidates=max_cand, tree_added=added, empty_clusters=len(empty)))
        log.debug("iter %d wcssd=%.6g active=%d evals=%d trees=%d", t, cur_j,
                  active, evals, trees_used)
        prev_j = cur_j
        if stop:
            break
    return state


# --- model persistence ---------------------------------------------------

MODEL_MAGIC = b"CKMMODEL"
MODEL_VERSION = 1


def save_model(path, model: ClusterModel, seed: int = 0,
               config: Optional[dict] = None) -> None:
    """Write header (magic, version, n, d, k, seed, JSON config), centers, assignments."""
    n = model.assignments.shape[0]
    k, d = model.centers.shape
    blob = json.dumps(config or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<IQIIqI", MODEL_VERSION, n, d, k, seed, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(model.centers, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.assignments, dtype="<i8").tobytes())


def load_model(path) -> tuple[ClusterModel, dict]:
    """Inverse of :func:`save_model`; distances are left as NaN."""
    with open(path, "rb") as fh:
        if fh.read(8) != MODEL_MAGIC:
            raise ValueError(f"{path}: not a model file")
        head = fh.read(struct.calcsize("<IQIIqI"))
        if len(head) != struct.calcsize("<IQIIqI"):
            raise ValueError(f"{path}: truncated header")
        version, n, d, k, seed, blen = struct.unpack("<IQIIqI", head)
        if version != MODEL_VERSION:
            raise ValueError(f"{path}: unsupported model version {version}")
        config = json.loads(fh.read(blen).decode("utf-8"))
        raw_c = fh.read(8 * k * d)
        raw_z = fh.read(8 * n)
        if len(raw_c) != 8 * k * d or len(raw_z) != 8 * n:
            raise ValueError(f"{path}: truncated body")
    centers = np.frombuffer(raw_c, dtype="<f8").astype(np.float64).reshape(k, d)
    z = np.frombuffer(raw_z, dtype="<i8").astype(np.int64)
    meta = {"n": n, "d": d, "k": k, "seed": seed, "config": config}
    return ClusterModel(centers, z, np.full(n, np.nan)), meta


def config_dict(config: ClosureConfig) -> dict:
    return asdict(config)
