"""Compiled inner loops.

Every point-center distance that decides an assignment goes through
``sqdist`` so that the closure path and the exact Lloyd path compare
bit-identical values.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def sqdist(x, c):
    s = 0.0
    for t in range(x.shape[0]):
        diff = x[t] - c[t]
        s += diff * diff
    return s


@njit(cache=True, nogil=True)
def _better(dist, j, best_d, best_j, cur):
    # Leave the current cluster only on a strict improvement; among equally
    # good alternatives prefer the smaller cluster id.
    if dist < best_d:
        return True
    if dist == best_d and best_j != cur and j < best_j:
        return True
    return False


@njit(cache=True, nogil=True)
def closure_assign_range(X, C, indptr, nbrs, z_prev, z_out, d_out, n_cand,
                         marker, start, stop):
    """Assign points ``start:stop`` using candidates from neighbor memberships.

    ``marker`` is a scratch array of length k owned by the calling worker.
    Returns the number of distance evaluations performed.
    """
    evals = 0
    for i in range(start, stop):
        cur = z_prev[i]
        x = X[i]
        best_j = cur
        best_d = sqdist(x, C[cur])
        marker[cur] = i
        cnt = 1
        for p in range(indptr[i], indptr[i + 1]):
            j = z_prev[nbrs[p]]
            if marker[j] == i:
                continue
            marker[j] = i
            cnt += 1
            dist = sqdist(x, C[j])
            if _better(dist, j, best_d, best_j, cur):
                best_d = dist
                best_j = j
        z_out[i] = best_j
        d_out[i] = best_d
        n_cand[i] = cnt
        evals += cnt
    return evals


@njit(cache=True, nogil=True)
def resolve_screened(X, C, z_prev, cand_ptr, cand, z_out, d_out, start, stop):
    """Exact argmin among screened candidate clusters for points ``start:stop``.

    ``z_prev[i] < 0`` means the point has no previous assignment.
    """
    for i in range(start, stop):
        x = X[i]
        cur = z_prev[i]
        if cur >= 0:
            best_j = cur
            best_d = sqdist(x, C[cur])
        else:
            best_j = -1
            best_d = np.inf
        for p in range(cand_ptr[i - start], cand_ptr[i - start + 1]):
            j = cand[p]
            if j == cur:
                continue
            dist = sqdist(x, C[j])
            if best_j < 0 or _better(dist, j, best_d, best_j, cur):
                best_d = dist
                best_j = j
        z_out[i] = best_j
        d_out[i] = best_d


@njit(cache=True, nogil=True)
def cluster_sums(X, order, bounds, lo, hi, sums):
    """Sum the members of clusters ``lo:hi`` in ascending point order.

    ``order`` lists point ids grouped by cluster (stable in point id) and
    ``bounds[j]:bounds[j+1]`` delimits cluster j.
    """
    d = X.shape[1]
    for j in range(lo, hi):
        for t in range(d):
            sums[j, t] = 0.0
        for p in range(bounds[j], bounds[j + 1]):
            i = order[p]
            for t in range(d):
                sums[j, t] += X[i, t]


@njit(cache=True, nogil=True)
def point_distances(X, C, z, out, start, stop):
    for i in range(start, stop):
        out[i] = sqdist(X[i], C[z[i]])


@njit(cache=True)
def merge_leaves(indptr, nbrs, leaf_of, leaf_ptr, leaf_members):
    """Union every point's sorted neighbor list with its sorted leaf bucket."""
    n = indptr.shape[0] - 1
    new_ptr = np.empty(n + 1, dtype=np.int64)
    new_ptr[0] = 0
    # first pass: sizes
    for i in range(n):
        a, a_end = indptr[i], indptr[i + 1]
        leaf = leaf_of[i]
        b, b_end = leaf_ptr[leaf], leaf_ptr[leaf + 1]
        cnt = 0
        while a < a_end and b < b_end:
            va = nbrs[a]
            vb = leaf_members[b]
            if va == vb:
                a += 1
                b += 1
            elif va < vb:
                a += 1
            else:
                b += 1
            cnt += 1
        cnt += (a_end - a) + (b_end - b)
        new_ptr[i + 1] = new_ptr[i] + cnt
    out = np.empty(new_ptr[n], dtype=nbrs.dtype)
    for i in range(n):
        a, a_end = indptr[i], indptr[i + 1]
        leaf = leaf_of[i]
        b, b_end = leaf_ptr[leaf], leaf_ptr[leaf + 1]
        w = new_ptr[i]
        while a < a_end and b < b_end:
            va = nbrs[a]
            vb = leaf_members[b]
            if va == vb:
                out[w] = va
                a += 1
                b += 1
            elif va < vb:
                out[w] = va
                a += 1
            else:
                out[w] = vb
                b += 1
            w += 1
        while a < a_end:
            out[w] = nbrs[a]
            a += 1
            w += 1
        while b < b_end:
            out[w] = leaf_members[b]
            b += 1
            w += 1
    return new_ptr, out


@njit(cache=True, nogil=True)
def top_direction(cov, v0, max_iter, tol):
    """Power iteration on a symmetric PSD matrix.

    Stops once the angle between successive iterates drops below ``tol``
    (radians) or after ``max_iter`` multiplications.
    """
    v = v0 / np.sqrt(np.dot(v0, v0))
    for _ in range(max_iter):
        w = cov @ v
        norm = np.sqrt(np.dot(w, w))
        if norm == 0.0:
            return v, False
        w = w / norm
        cosang = abs(np.dot(w, v))
        v = w
        if cosang >= 1.0:
            return v, True
        if np.arccos(cosang) < tol:
            return v, True
    return v, False


@njit(cache=True)
def covered_by_closure(indptr, nbrs, z_prev, z_next, points):
    """For each listed point, does some neighbor previously belong to its next cluster?"""
    out = np.zeros(points.shape[0], dtype=np.bool_)
    for q in range(points.shape[0]):
        i = points[q]
        target = z_next[i]
        for p in range(indptr[i], indptr[i + 1]):
            if z_prev[nbrs[p]] == target:
                out[q] = True
                break
    return out
