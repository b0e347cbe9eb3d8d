"""Dataset readers/writers, synthetic mixtures and CSV exports.

fvecs record: little-endian int32 ``d`` followed by ``d`` float32 values.
bvecs record: the same header followed by ``d`` unsigned bytes.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import Dataset, IterationStats


class FormatError(ValueError):
    """Malformed dataset file; the message names the offending position."""


def _read_vecs(path, value_dtype: np.dtype) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw:
        raise FormatError(f"{path}: empty dataset")
    item = value_dtype.itemsize
    if len(raw) < 4:
        raise FormatError(f"{path}: record 0 truncated in header")
    d = int(np.frombuffer(raw, dtype="<i4", count=1)[0])
    if d <= 0:
        raise FormatError(f"{path}: record 0 has non-positive dimension {d}")
    rec = 4 + d * item
    n, rem = divmod(len(raw), rec)
    # Validate headers before trusting the fixed stride.
    if n:
        heads = np.frombuffer(raw, dtype=np.uint8, count=n * rec).reshape(n, rec)[:, :4]
        dims = heads.copy().view("<i4").ravel()
        bad = np.flatnonzero(dims != d)
        if bad.size:
            r = int(bad[0])
            raise FormatError(
                f"{path}: record {r} has dimension {int(dims[r])}, expected {d}")
    if rem:
        raise FormatError(f"{path}: record {n} truncated ({rem} of {rec} bytes)")
    body = np.frombuffer(raw, dtype=np.uint8).reshape(n, rec)[:, 4:]
    return np.ascontiguousarray(body).view(value_dtype.newbyteorder("<")).reshape(n, d)


def read_fvecs(path) -> Dataset:
    vals = _read_vecs(path, np.dtype("<f4"))
    return Dataset(vals.astype(np.float64))


def read_bvecs(path) -> Dataset:
    vals = _read_vecs(path, np.dtype("u1"))
    return Dataset(vals.astype(np.float64))


def _write_vecs(points: np.ndarray, path, value_dtype: str) -> None:
    pts = np.asarray(points)
    n, d = pts.shape
    rec = np.empty((n, 4 + d * np.dtype(value_dtype).itemsize), dtype=np.uint8)
    rec[:, :4] = np.full((n, 1), d, dtype="<i4").view(np.uint8)
    rec[:, 4:] = np.ascontiguousarray(pts.astype(value_dtype)).view(np.uint8).reshape(n, -1)
    with open(path, "wb") as fh:
        fh.write(rec.tobytes())


def write_fvecs(dataset: Dataset, path) -> None:
    """Points narrowed to float32."""
    _write_vecs(dataset.points, path, "<f4")


def write_bvecs(dataset: Dataset, path) -> None:
    pts = dataset.points
    if np.any((pts < 0) | (pts > 255) | (pts != np.round(pts))):
        raise ValueError("bvecs holds integers in [0, 255] only")
    _write_vecs(pts, path, "u1")


def read_csv(path, has_labels: bool = False) -> Dataset:
    rows: list[list[float]] = []
    labels: list[int] = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if width < (2 if has_labels else 1):
                    raise FormatError(f"{path}:{lineno}: too few columns")
            elif len(row) != width:
                raise FormatError(
                    f"{path}:{lineno}: expected {width} cells, found {len(row)}")
            cells = row[:-1] if has_labels else row
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if has_labels:
                try:
                    labels.append(int(row[-1]))
                except ValueError:
                    raise FormatError(
                        f"{path}:{lineno}: label {row[-1]!r} is not an integer") from None
    if not rows:
        raise FormatError(f"{path}: empty dataset")
    pts = np.array(rows, dtype=np.float64)
    bad = np.argwhere(~np.isfinite(pts))
    if bad.size:
        raise FormatError(f"{path}:{int(bad[0, 0]) + 1}: non-finite value")
    return Dataset(pts, np.array(labels, dtype=np.int64) if has_labels else None)


def write_csv(dataset: Dataset, path, with_labels: bool = False) -> None:
    """17 significant digits, enough to round-trip every float64."""
    if with_labels and dataset.labels is None:
        raise ValueError("dataset has no labels")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for i, p in enumerate(dataset.points):
            row = [format(v, ".17g") for v in p]
            if with_labels:
                row.append(str(int(dataset.labels[i])))
            w.writerow(row)


def read_labels(path) -> np.ndarray:
    """One integer label per line."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad label {line!r}") from None
    return np.array(out, dtype=np.int64)


def write_labels(labels: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("".join(f"{int(v)}\n" for v in labels))


def read_dataset(path, has_labels: bool = False) -> Dataset:
    """Dispatch on extension: ``.fvecs``, ``.bvecs``, otherwise CSV."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".fvecs":
        return read_fvecs(path)
    if ext == ".bvecs":
        return read_bvecs(path)
    return read_csv(path, has_labels)


def gen_gmm(k_true: int, n: int, d: int, center_scale: float = 10.0,
            sigma: float = 0.5, seed: int = 0) -> Dataset:
    """Isotropic Gaussian mixture with centers uniform in ``[-center_scale, center_scale]^d``.

    Each point picks its component uniformly; labels are component ids.
    """
    return gen_gmm_with_centers(k_true, n, d, center_scale, sigma, seed)[0]


def gen_gmm_with_centers(k_true: int, n: int, d: int, center_scale: float = 10.0,
                         sigma: float = 0.5, seed: int = 0) -> tuple[Dataset, np.ndarray]:
    if not (1 <= k_true <= n) or d < 1:
        raise ValueError(f"need 1 <= k_true <= n and d >= 1 (k_true={k_true}, n={n}, d={d})")
    if center_scale < 0 or sigma < 0:
        raise ValueError("center_scale and sigma must be non-negative")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-center_scale, center_scale, size=(k_true, d))
    labels = rng.integers(0, k_true, size=n)
    points = centers[labels] + sigma * rng.standard_normal((n, d))
    return Dataset(points, labels), centers


def uniform_cube(n: int, d: int, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    return Dataset(rng.uniform(-1.0, 1.0, size=(n, d)))


def duplicate_points(n: int, d: int, distinct: int, seed: int = 0) -> Dataset:
    """``n`` points drawn from only ``distinct`` locations."""
    rng = np.random.default_rng(seed)
    sites = rng.uniform(-1.0, 1.0, size=(distinct, d))
    which = rng.integers(0, distinct, size=n)
    return Dataset(sites[which], which)


# --- CSV exports ----------------------------------------------------------

def write_history_csv(history: Iterable[IterationStats], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(IterationStats.CSV_COLUMNS)
        for s in history:
            w.writerow(s.csv_row())


def read_history_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_histogram_csv(edges: np.ndarray, counts: np.ndarray, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bin_left", "bin_right", "count"))
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow((repr(float(lo)), repr(float(hi)), int(c)))


def write_recall_csv(points, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("tree_count", "mean_neighborhood_size",
                    "max_neighborhood_size", "recall"))
        for p in points:
            w.writerow((p.tree_count, f"{p.mean_neighborhood:.4f}",
                        p.max_neighborhood, repr(float(p.recall))))
