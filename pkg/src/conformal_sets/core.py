"""Probability matrices, label ranks, and class-conditional rank errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

# Rows whose sum is within this tolerance of 1 are renormalized; anything
# further off is rejected as data corruption rather than rounding noise.
ROW_SUM_TOL = 1e-6
# Rows whose sum is this close to 1 are stored untouched; dividing by a
# sum within a few ulps of 1 would only smear the last bit around.
RENORM_SKIP = 1e-12


@dataclass(frozen=True)
class ProbabilityMatrix:
    """An (n, K) float64 matrix of class probabilities, one row per example.

    Construct via :func:`probability_matrix`, which validates and
    renormalizes; the raw constructor trusts its input.
    """

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]


def probability_matrix(values, *, copy: bool = True) -> ProbabilityMatrix:
    """Validate an array-like as a probability matrix.

    Requirements: 2-d, at least one row, at least two columns, finite entries
    in [0, 1], each row summing to 1 within ROW_SUM_TOL.  Rows inside the
    tolerance are renormalized, except rows already within RENORM_SKIP of 1,
    which are kept bit-for-bit so that ingestion is idempotent and writing a
    matrix out and reading it back reproduces the values exactly.
    """
    arr = np.array(values, dtype=np.float64, copy=copy)
    if arr.ndim != 2:
        raise InputError(f"probability matrix must be 2-d, got shape {arr.shape}")
    n, k = arr.shape
    if n < 1:
        raise InputError("probability matrix must have at least one row")
    if k < 2:
        raise InputError(f"need at least 2 classes, got {k}")
    if not np.all(np.isfinite(arr)):
        row = int(np.argwhere(~np.isfinite(arr).all(axis=1))[0, 0])
        raise InputError(f"row {row}: non-finite probability")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        bad = (arr < 0.0) | (arr > 1.0)
        row = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise InputError(f"row {row}: probability outside [0, 1]")
    sums = arr.sum(axis=1)
    off = np.abs(sums - 1.0) > ROW_SUM_TOL
    if np.any(off):
        row = int(np.argmax(off))
        raise InputError(
            f"row {row}: probabilities sum to {sums[row]:.9g}, "
            f"which is more than {ROW_SUM_TOL:g} away from 1"
        )
    needs = np.abs(sums - 1.0) > RENORM_SKIP
    if np.any(needs):
        arr[needs] /= sums[needs, None]
    return ProbabilityMatrix(arr)


def validate_labels(labels, n: int, num_classes: int) -> np.ndarray:
    """Check labels are integers in [0, num_classes) with one per row."""
    lab = np.asarray(labels)
    if lab.ndim != 1:
        raise InputError(f"labels must be 1-d, got shape {lab.shape}")
    if lab.shape[0] != n:
        raise InputError(f"expected {n} labels, got {lab.shape[0]}")
    if lab.size and not np.issubdtype(lab.dtype, np.integer):
        if not np.all(np.isfinite(lab.astype(np.float64))):
            row = int(np.argmax(~np.isfinite(lab.astype(np.float64))))
            raise InputError(f"label at row {row} is not an integer")
        as_int = lab.astype(np.int64)
        if np.any(as_int != lab):
            row = int(np.argmax(as_int != lab))
            raise InputError(f"label at row {row} is not an integer")
        lab = as_int
    lab = lab.astype(np.int64)
    if lab.size and (lab.min() < 0 or lab.max() >= num_classes):
        bad = (lab < 0) | (lab >= num_classes)
        row = int(np.argmax(bad))
        raise InputError(
            f"label {lab[row]} at row {row} outside [0, {num_classes})"
        )
    return lab


def label_rank(row, y: int) -> int:
    """Rank of label y in one probability row: #{l : p_l >= p_y}.

    The best rank is 1; ties all receive the shared, worse rank, so a
    two-way tie at the top ranks both labels 2.
    """
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise InputError(f"expected a single row, got shape {row.shape}")
    if not 0 <= y < row.shape[0]:
        raise InputError(f"label {y} outside [0, {row.shape[0]})")
    return int(np.count_nonzero(row >= row[y]))


def label_ranks(probs: ProbabilityMatrix) -> np.ndarray:
    """(n, K) int64 matrix of label_rank(row_i, y) for every candidate y."""
    p = probs.values
    n = p.shape[0]
    out = np.empty(p.shape, dtype=np.int64)
    # Chunked to keep the (chunk, K, K) comparison tensor small.
    chunk = max(1, 4_000_000 // max(1, p.shape[1] * p.shape[1]))
    for lo in range(0, n, chunk):
        block = p[lo : lo + chunk]
        out[lo : lo + chunk] = (block[:, :, None] >= block[:, None, :]).sum(axis=1)
    return out


def true_label_ranks(probs: ProbabilityMatrix, labels) -> np.ndarray:
    """(n,) ranks of each row's true label."""
    lab = validate_labels(labels, probs.n, probs.num_classes)
    p = probs.values
    true_p = p[np.arange(p.shape[0]), lab]
    return (p >= true_p[:, None]).sum(axis=1).astype(np.int64)


@dataclass(frozen=True)
class ClassPartition:
    """Row indices grouped by true label; counts[y] == len(indices[y])."""

    indices: tuple
    counts: np.ndarray

    @property
    def num_classes(self) -> int:
        return len(self.indices)


def partition_by_class(labels, num_classes: int) -> ClassPartition:
    lab = np.asarray(labels, dtype=np.int64)
    if num_classes < 2:
        raise InputError(f"need at least 2 classes, got {num_classes}")
    if lab.size:
        validate_labels(lab, lab.shape[0], num_classes)
    idx = tuple(np.flatnonzero(lab == y) for y in range(num_classes))
    counts = np.array([ix.size for ix in idx], dtype=np.int64)
    return ClassPartition(idx, counts)


@dataclass(frozen=True)
class TopKErrorTable:
    """Plug-in estimates of the class-conditional rank-miss rates.

    eps[y, k-1] estimates P(rank of true label > k | Y = y) on the supplied
    sample.  Each row is non-increasing in k and ends at exactly 0, since no
    rank can exceed the number of classes.  Classes absent from the sample
    are flagged degenerate; their eps row is all zeros and must not be used.
    """

    eps: np.ndarray
    counts: np.ndarray
    degenerate: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.eps.shape[0]


def estimate_topk_errors(probs: ProbabilityMatrix, labels) -> TopKErrorTable:
    lab = validate_labels(labels, probs.n, probs.num_classes)
    k = probs.num_classes
    ranks = true_label_ranks(probs, lab)
    part = partition_by_class(lab, k)
    eps = np.zeros((k, k), dtype=np.float64)
    degenerate = part.counts == 0
    thresholds = np.arange(1, k + 1)
    for y in range(k):
        if degenerate[y]:
            continue
        ry = ranks[part.indices[y]]
        eps[y] = (ry[:, None] > thresholds[None, :]).mean(axis=0)
    # rank <= K always, so the last column is identically zero.
    eps[:, -1] = 0.0
    return TopKErrorTable(eps, part.counts, degenerate)
