"""Random partition trees and the multi-tree neighborhood index.

A tree splits each node at the median of the node's points projected on a
principal direction estimated from a random sample of those points, so the
two children differ in size by at most one.  Leaf buckets become
neighborhoods; uniting buckets over several trees widens them.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass
from typing import BinaryIO, Optional

import numpy as np

from . import _kernels
from .core import Dataset

DEFAULT_SAMPLE_SIZE = 256
POWER_MAX_ITER = 100
POWER_TOL = 1e-6

_TREE_MAGIC = b"CKMTREE\0"
_INDEX_MAGIC = b"CKMNBHD\0"
_FORMAT_VERSION = 1


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def principal_direction(sample, seed=None) -> tuple[np.ndarray, bool]:
    """Approximate top eigenvector of the sample covariance.

    Returns ``(direction, degenerate)``.  When all sample points coincide
    there is no preferred direction and a uniformly random unit vector is
    returned with ``degenerate=True``.
    """
    rng = _as_rng(seed)
    S = np.asarray(sample, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] < 1:
        raise ValueError("sample must be a non-empty 2-D array")
    s, d = S.shape
    centered = S - S.mean(axis=0)
    if not np.any(centered):
        v = rng.standard_normal(d)
        return v / np.linalg.norm(v), True
    if d <= s:
        cov = centered.T @ centered
        v, _ = _kernels.top_direction(cov, rng.standard_normal(d),
                                      POWER_MAX_ITER, POWER_TOL)
    else:
        # Same spectrum through the s x s Gram matrix, then map back.
        gram = centered @ centered.T
        u, _ = _kernels.top_direction(gram, rng.standard_normal(s),
                                      POWER_MAX_ITER, POWER_TOL)
        v = centered.T @ u
    norm = np.linalg.norm(v)
    if norm == 0.0 or not np.isfinite(norm):
        v = rng.standard_normal(d)
        return v / np.linalg.norm(v), True
    return v / norm, False


@dataclass
class RPTree:
    """Array-backed binary partition tree.

    Internal node ``u`` sends ``x`` to ``children[u, 0]`` when
    ``directions[u] . x <= thresholds[u]`` and to ``children[u, 1]``
    otherwise.  A negative child ``c`` denotes leaf ``~c``.  Leaf ``l`` holds
    the sorted point ids ``leaf_members[leaf_ptr[l]:leaf_ptr[l + 1]]``.
    """

    directions: np.ndarray
    thresholds: np.ndarray
    children: np.ndarray
    leaf_ptr: np.ndarray
    leaf_members: np.ndarray
    leaf_of: np.ndarray
    bucket_capacity: int
    degenerate_splits: int = 0

    @property
    def n(self) -> int:
        return self.leaf_of.shape[0]

    @property
    def n_leaves(self) -> int:
        return self.leaf_ptr.shape[0] - 1

    @property
    def root(self) -> int:
        return 0 if self.thresholds.shape[0] else ~0

    def bucket(self, leaf: int) -> np.ndarray:
        return self.leaf_members[self.leaf_ptr[leaf]:self.leaf_ptr[leaf + 1]]

    def buckets(self) -> list[np.ndarray]:
        return [self.bucket(l) for l in range(self.n_leaves)]

    def depth(self) -> int:
        best = 0
        stack = [(self.root, 0)]
        while stack:
            node, level = stack.pop()
            if node < 0:
                best = max(best, level)
            else:
                stack.extend((int(c), level + 1) for c in self.children[node])
        return best


class _Splitter:
    def __init__(self, X: np.ndarray, sample_size: int, rng: np.random.Generator):
        self.X = X
        self.sample_size = sample_size
        self.rng = rng
        self.degenerate = 0

    def split(self, idx: np.ndarray):
        size = idx.shape[0]
        s = min(self.sample_size, size)
        if s < size:
            pick = np.sort(self.rng.choice(size, s, replace=False))
            sample = self.X[idx[pick]]
        else:
            sample = self.X[idx]
        direction, degenerate = principal_direction(sample, self.rng)
        self.degenerate += degenerate
        proj = self.X[idx] @ direction
        order = np.argsort(proj, kind="stable")
        half = size - size // 2
        lo, hi = proj[order[half - 1]], proj[order[half]]
        threshold = lo
        if lo < hi:
            threshold = lo + (hi - lo) / 2
            if threshold >= hi:
                threshold = lo
        left = np.sort(idx[order[:half]])
        right = np.sort(idx[order[half:]])
        return direction, threshold, left, right


def _finalize(root, n: int, d: int, bucket_capacity: int, degenerate: int) -> RPTree:
    # root is a nested tuple tree: ("leaf", idx) | ("split", dir, thr, l, r)
    directions, thresholds, children = [], [], []
    leaves: list[np.ndarray] = []

    def visit(node) -> int:
        if node[0] == "leaf":
            leaves.append(node[1])
            return ~(len(leaves) - 1)
        u = len(thresholds)
        directions.append(node[1])
        thresholds.append(node[2])
        children.append([0, 0])
        children[u][0] = visit(node[3])
        children[u][1] = visit(node[4])
        return u

    visit(root)
    leaf_ptr = np.zeros(len(leaves) + 1, dtype=np.int64)
    np.cumsum([len(b) for b in leaves], out=leaf_ptr[1:])
    leaf_members = np.concatenate(leaves).astype(np.int64)
    leaf_of = np.empty(n, dtype=np.int64)
    for l, b in enumerate(leaves):
        leaf_of[b] = l
    return RPTree(
        directions=np.array(directions, dtype=np.float64).reshape(-1, d),
        thresholds=np.array(thresholds, dtype=np.float64),
        children=np.array(children, dtype=np.int64).reshape(-1, 2),
        leaf_ptr=leaf_ptr,
        leaf_members=leaf_members,
        leaf_of=leaf_of,
        bucket_capacity=bucket_capacity,
        degenerate_splits=degenerate,
    )


def build_tree(dataset: Dataset, bucket_capacity: int,
               sample_size: int = DEFAULT_SAMPLE_SIZE, seed=None) -> RPTree:
    """Recursively median-split until every leaf holds at most ``bucket_capacity`` points."""
    if bucket_capacity < 2:
        raise ValueError("bucket_capacity must be >= 2")
    splitter = _Splitter(dataset.points, max(1, sample_size), _as_rng(seed))

    def grow(idx):
        if idx.shape[0] <= bucket_capacity:
            return ("leaf", idx)
        direction, threshold, left, right = splitter.split(idx)
        return ("split", direction, threshold, grow(left), grow(right))

    root = grow(np.arange(dataset.n, dtype=np.int64))
    return _finalize(root, dataset.n, dataset.d, bucket_capacity, splitter.degenerate)


def build_partition(dataset: Dataset, n_leaves: int,
                    sample_size: int = DEFAULT_SAMPLE_SIZE, seed=None) -> RPTree:
    """Tree with exactly ``n_leaves`` leaves, always splitting the largest leaf.

    Ties on size go to the leaf created first.
    """
    if not 1 <= n_leaves <= dataset.n:
        raise ValueError(f"cannot form {n_leaves} leaves from {dataset.n} points")
    splitter = _Splitter(dataset.points, max(1, sample_size), _as_rng(seed))
    root = ["leaf", np.arange(dataset.n, dtype=np.int64)]
    heap = [(-dataset.n, 0, root)]
    counter = 1
    count = 1
    while count < n_leaves:
        _, _, node = heapq.heappop(heap)
        direction, threshold, left, right = splitter.split(node[1])
        lnode, rnode = ["leaf", left], ["leaf", right]
        node[:] = ["split", direction, threshold, lnode, rnode]
        heapq.heappush(heap, (-left.shape[0], counter, lnode))
        heapq.heappush(heap, (-right.shape[0], counter + 1, rnode))
        counter += 2
        count += 1
    capacity = max(-h[0] for h in heap)
    return _finalize(root, dataset.n, dataset.d, max(2, capacity), splitter.degenerate)


def route_point(tree: RPTree, x) -> np.ndarray:
    """Bucket of the leaf reached by descending with ``x``; ties go left."""
    x = np.asarray(x, dtype=np.float64)
    if tree.directions.shape[0] and x.shape != (tree.directions.shape[1],):
        raise ValueError(f"point has shape {x.shape}, tree expects "
                         f"({tree.directions.shape[1]},)")
    node = tree.root
    while node >= 0:
        side = 0 if float(np.dot(tree.directions[node], x)) <= tree.thresholds[node] else 1
        node = int(tree.children[node, side])
    return tree.bucket(~node)


@dataclass
class NeighborhoodIndex:
    """Per-point neighbor sets stored as sorted CSR lists.

    ``complete`` marks an index where every neighborhood is the whole
    dataset (some tree had a single leaf); the lists are then not stored.
    """

    n: int
    indptr: Optional[np.ndarray]
    nbrs: Optional[np.ndarray]
    tree_count: int = 0
    complete: bool = False

    @classmethod
    def empty(cls, n: int) -> "NeighborhoodIndex":
        ids = np.arange(n, dtype=np.int64)
        return cls(n, np.arange(n + 1, dtype=np.int64), ids, 0, False)

    def neighbors(self, i: int) -> np.ndarray:
        if self.complete:
            return np.arange(self.n, dtype=np.int64)
        return self.nbrs[self.indptr[i]:self.indptr[i + 1]]

    def sizes(self) -> np.ndarray:
        if self.complete:
            return np.full(self.n, self.n, dtype=np.int64)
        return np.diff(self.indptr)


def add_tree_to_index(index: NeighborhoodIndex, tree: RPTree) -> NeighborhoodIndex:
    """Unite every point's neighborhood with its leaf bucket in ``tree``."""
    if tree.n != index.n:
        raise ValueError(f"tree covers {tree.n} points, index has {index.n}")
    if index.complete or tree.n_leaves == 1:
        return NeighborhoodIndex(index.n, None, None, index.tree_count + 1, True)
    indptr, nbrs = _kernels.merge_leaves(index.indptr, index.nbrs, tree.leaf_of,
                                         tree.leaf_ptr, tree.leaf_members)
    return NeighborhoodIndex(index.n, indptr, nbrs, index.tree_count + 1, False)


# --- binary persistence (little-endian) -----------------------------------

def _write_array(fh: BinaryIO, arr: np.ndarray, dtype: str) -> None:
    fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def _read_array(fh: BinaryIO, dtype: str, count: int) -> np.ndarray:
    dt = np.dtype(dtype)
    raw = fh.read(dt.itemsize * count)
    if len(raw) != dt.itemsize * count:
        raise ValueError("truncated file")
    return np.frombuffer(raw, dtype=dt).astype(dt.newbyteorder("="))


def save_trees(path, trees: list[RPTree]) -> None:
    with open(path, "wb") as fh:
        fh.write(_TREE_MAGIC)
        fh.write(struct.pack("<II", _FORMAT_VERSION, len(trees)))
        for t in trees:
            d = t.directions.shape[1] if t.directions.size else 0
            fh.write(struct.pack("<QQQQQQ", t.n, d, t.bucket_capacity,
                                 t.thresholds.shape[0], t.n_leaves,
                                 t.degenerate_splits))
            _write_array(fh, t.directions, "<f8")
            _write_array(fh, t.thresholds, "<f8")
            _write_array(fh, t.children, "<i8")
            _write_array(fh, t.leaf_ptr, "<i8")
            _write_array(fh, t.leaf_members, "<i8")


def load_trees(path) -> list[RPTree]:
    with open(path, "rb") as fh:
        if fh.read(8) != _TREE_MAGIC:
            raise ValueError(f"{path}: not a tree file")
        version, count = struct.unpack("<II", fh.read(8))
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        trees = []
        for _ in range(count):
            n, d, cap, n_int, n_leaves, degen = struct.unpack("<QQQQQQ", fh.read(48))
            directions = _read_array(fh, "<f8", n_int * d).reshape(n_int, d)
            thresholds = _read_array(fh, "<f8", n_int)
            children = _read_array(fh, "<i8", 2 * n_int).reshape(n_int, 2)
            leaf_ptr = _read_array(fh, "<i8", n_leaves + 1)
            leaf_members = _read_array(fh, "<i8", n)
            leaf_of = np.empty(n, dtype=np.int64)
            leaf_of[leaf_members] = np.repeat(np.arange(n_leaves), np.diff(leaf_ptr))
            trees.append(RPTree(directions, thresholds, children, leaf_ptr,
                                leaf_members, leaf_of, int(cap), int(degen)))
    return trees


def save_index(path, index: NeighborhoodIndex) -> None:
    with open(path, "wb") as fh:
        fh.write(_INDEX_MAGIC)
        fh.write(struct.pack("<IQIB", _FORMAT_VERSION, index.n, index.tree_count,
                             int(index.complete)))
        if not index.complete:
            fh.write(struct.pack("<Q", index.nbrs.shape[0]))
            _write_array(fh, index.indptr, "<i8")
            _write_array(fh, index.nbrs, "<i8")


def load_index(path) -> NeighborhoodIndex:
    with open(path, "rb") as fh:
        if fh.read(8) != _INDEX_MAGIC:
            raise ValueError(f"{path}: not a neighborhood index file")
        version, n, tree_count, complete = struct.unpack("<IQIB", fh.read(17))
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        if complete:
            return NeighborhoodIndex(n, None, None, tree_count, True)
        (nnz,) = struct.unpack("<Q", fh.read(8))
        indptr = _read_array(fh, "<i8", n + 1)
        nbrs = _read_array(fh, "<i8", nnz)
    return NeighborhoodIndex(n, indptr, nbrs, tree_count, False)
