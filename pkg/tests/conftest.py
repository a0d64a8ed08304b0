"""Shared test helpers: independent oracles and input generators.

Oracles here are deliberately naive (pure-Python loops, full sorts) so they
cannot share bugs with the vectorized library paths they check.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from conformal_sets import ProbabilityMatrix, probability_matrix

# -- independent oracles -------------------------------------------------------


def oracle_rank(row, y) -> int:
    """Count of entries >= row[y], by explicit loop."""
    count = 0
    for v in row:
        if v >= row[y]:
            count += 1
    return count


def oracle_quantile(scores, level) -> float:
    """m-th smallest with m = ceil(level*(n+1)), by full sort."""
    ordered = sorted(float(s) for s in scores)
    n = len(ordered)
    m = math.ceil(level * (n + 1))
    if n == 0 or m > n:
        return math.inf
    return ordered[m - 1]


def oracle_aps(row, y, u) -> float:
    """Descending cumulative mass through y's rank, loop arithmetic.

    Mirrors the sequential summation order of the library (cumsum), so exact
    float equality is a fair assertion.
    """
    r = oracle_rank(row, y)
    desc = sorted(row, reverse=True)
    total = 0.0
    for l in range(r):
        total += desc[l]
    return total - (1.0 - u) * desc[r - 1]


def oracle_raps(row, y, u, lam, k_reg) -> float:
    r = oracle_rank(row, y)
    return oracle_aps(row, y, u) + lam * max(0, r - k_reg)


def oracle_topk_errors(probs, labels, num_classes):
    """eps[y][k-1] = fraction of class-y rows whose true rank exceeds k."""
    rows = probs.values if isinstance(probs, ProbabilityMatrix) else probs
    eps = [[0.0] * num_classes for _ in range(num_classes)]
    for y in range(num_classes):
        members = [i for i, lab in enumerate(labels) if lab == y]
        if not members:
            continue
        for k in range(1, num_classes + 1):
            misses = sum(1 for i in members if oracle_rank(rows[i], labels[i]) > k)
            eps[y][k - 1] = misses / len(members)
    return eps


# -- generators -----------------------------------------------------------------


def random_matrix(rng: np.random.Generator, n: int, k: int,
                  concentration: float = 1.0) -> ProbabilityMatrix:
    vals = rng.dirichlet(np.full(k, concentration), size=n)
    return probability_matrix(vals)


def random_labels(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return rng.integers(0, k, size=n)


def labels_covering_all(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """Random labels guaranteed to include every class at least once."""
    assert n >= k
    lab = rng.integers(0, k, size=n)
    lab[:k] = np.arange(k)
    return lab


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)
