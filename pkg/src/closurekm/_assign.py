"""Assignment and empty-cluster repair shared by the closure and Lloyd drivers."""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import _kernels
from .core import run_ranges
from .rptree import NeighborhoodIndex

_UNIT_ROUNDOFF = 2.0 ** -53
_SCREEN_ROWS = 2048


def _screen_margin(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # Twice the bound on |expanded-form distance - loop-kernel distance|:
    # any exact minimizer lies within this much of the screened minimum.
    d = X.shape[1]
    cmax = np.sqrt((C * C).sum(axis=1).max()) if C.shape[0] else 0.0
    xn = np.sqrt((X * X).sum(axis=1))
    return 8.0 * (d + 4) * _UNIT_ROUNDOFF * (xn + cmax) ** 2 + 1e-300


def exact_assignment(X: np.ndarray, C: np.ndarray, z_prev: Optional[np.ndarray],
                     clusters: Optional[np.ndarray] = None, threads: int = 1):
    """Nearest center among ``clusters`` (all by default) for every point.

    A point keeps ``z_prev[i]`` unless some center is strictly closer; ties
    among the others go to the smaller id.  Distances are screened with a
    BLAS product and every near-minimal candidate is re-evaluated with the
    same loop kernel the closure step uses, so both paths agree bit for bit.

    Returns ``(assignments, distances, distance_evaluations)``.
    """
    n = X.shape[0]
    k = C.shape[0]
    subset = np.arange(k) if clusters is None else np.asarray(clusters, dtype=np.int64)
    Cs = C[subset]
    cnorm = (Cs * Cs).sum(axis=1)
    prev = np.full(n, -1, dtype=np.int64) if z_prev is None else np.asarray(z_prev, dtype=np.int64)
    z_out = np.empty(n, dtype=np.int64)
    d_out = np.empty(n, dtype=np.float64)
    margin = _screen_margin(X, Cs)

    def work(start, stop):
        for a in range(start, stop, _SCREEN_ROWS):
            b = min(stop, a + _SCREEN_ROWS)
            Xa = X[a:b]
            approx = (Xa * Xa).sum(axis=1)[:, None] - 2.0 * (Xa @ Cs.T) + cnorm[None, :]
            lim = approx.min(axis=1) + margin[a:b]
            rows, cols = np.nonzero(approx <= lim[:, None])
            ptr = np.zeros(b - a + 1, dtype=np.int64)
            np.cumsum(np.bincount(rows, minlength=b - a), out=ptr[1:])
            _kernels.resolve_screened(X, C, prev, ptr, subset[cols], z_out, d_out, a, b)

    run_ranges(work, n, threads)
    return z_out, d_out, int(n) * int(subset.shape[0])


def closure_assignment(X: np.ndarray, C: np.ndarray, z_prev: np.ndarray,
                       index: NeighborhoodIndex, threads: int = 1):
    """Assign each point among the clusters of its neighbors.

    Returns ``(assignments, distances, per_point_candidate_counts, evaluations)``.
    """
    n, k = X.shape[0], C.shape[0]
    z_prev = np.ascontiguousarray(z_prev, dtype=np.int64)
    if index.complete:
        present = np.flatnonzero(np.bincount(z_prev, minlength=k))
        z, D, evals = exact_assignment(X, C, z_prev, present, threads)
        return z, D, np.full(n, present.shape[0], dtype=np.int64), evals
    z_out = np.empty(n, dtype=np.int64)
    d_out = np.empty(n, dtype=np.float64)
    n_cand = np.empty(n, dtype=np.int64)

    def work(start, stop):
        marker = np.full(k, -1, dtype=np.int64)
        return _kernels.closure_assign_range(X, C, index.indptr, index.nbrs, z_prev,
                                             z_out, d_out, n_cand, marker, start, stop)

    evals = sum(run_ranges(work, n, threads))
    return z_out, d_out, n_cand, int(evals)


def assigned_distances(X: np.ndarray, C: np.ndarray, z: np.ndarray,
                       threads: int = 1) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.float64)
    run_ranges(lambda a, b: _kernels.point_distances(X, C, z, out, a, b),
               X.shape[0], threads)
    return out


def settle_centers(X: np.ndarray, old_C: np.ndarray, new_C: np.ndarray, z: np.ndarray,
                   D_old: np.ndarray, empty, threads: int = 1) -> np.ndarray:
    """Distances to ``new_C``, keeping an old center where its rounded mean is no better.

    ``D_old`` holds each point's distance to ``old_C[z]``.  In exact arithmetic
    the mean never loses; in floating point it can lose by an ulp when a
    cluster's members coincide, which would let the objective creep upward.
    ``new_C`` is modified in place for such clusters.  Returns the distances.
    """
    D = assigned_distances(X, new_C, z, threads)
    k = new_C.shape[0]
    cost_new = np.bincount(z, weights=D, minlength=k)
    cost_old = np.bincount(z, weights=D_old, minlength=k)
    worse = cost_new > cost_old
    if empty:
        worse[list(empty)] = False
    if worse.any():
        new_C[worse] = old_C[worse]
        back = worse[z]
        D[back] = D_old[back]
    return D


def repair_empty(X: np.ndarray, C: np.ndarray, z: np.ndarray, D: np.ndarray,
                 empty) -> None:
    """Reseed each empty cluster at the point farthest from its center, in place.

    Only points whose cluster has at least two members are eligible, so a
    reseed never empties another cluster.
    """
    empty = sorted(int(j) for j in empty)
    if not empty:
        return
    k = C.shape[0]
    if len(empty) > X.shape[0]:
        raise ValueError(f"{len(empty)} empty clusters but only {X.shape[0]} points")
    counts = np.bincount(z, minlength=k)
    for j in empty:
        if counts[j]:
            continue
        eligible = counts[z] >= 2
        if not eligible.any():
            raise ValueError("no point can be moved without emptying its cluster")
        score = np.where(eligible, D, -np.inf)
        i = int(np.argmax(score))
        counts[z[i]] -= 1
        counts[j] += 1
        z[i] = j
        C[j] = X[i]
        D[i] = 0.0
