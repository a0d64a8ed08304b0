"""Nonconformity scores computed from probability rows.

Three families are supported:

* ``hps``: 1 - p_y, the plain miss probability of the candidate label.
* ``aps``: total probability mass strictly above the candidate plus a
  share of the candidate's own mass, sum_{l<r} p_(l) + u * p_(r) where
  p_(1) >= ... >= p_(K) and r is the candidate's rank.  With u ~ U[0,1)
  this is the randomized cumulative score; with randomization off, u = 1
  and the score is the plain cumulative sum through the candidate.  The
  value is capped at 1 so float noise in full-row sums cannot push a
  probability mass past the unit interval.
* ``raps``: aps plus a rank penalty lam * max(0, r - k_reg).

The tie-break variable u is drawn once per row from the indexed stream and
shared across every candidate label of that row, so scores within a row are
comparable and a row's scores never depend on which labels are queried.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import ProbabilityMatrix, label_rank, label_ranks, validate_labels
from .errors import ConfigError, InputError
from .rng import indexed_uniforms

APS = "aps"
RAPS = "raps"
HPS = "hps"
SCORE_KINDS = (APS, RAPS, HPS)


@dataclass(frozen=True)
class ScoreConfig:
    """Score family plus every knob that affects its value.

    lam and k_reg only apply to raps; randomize and seed only apply to the
    randomized families (aps, raps).  seed addresses the tie-break stream,
    so equal (config, row index) always yields the equal scores.
    """

    kind: str
    lam: float = 0.0
    k_reg: int = 1
    randomize: bool = True
    seed: int = 0

    def validated(self, num_classes: int | None = None) -> "ScoreConfig":
        if self.kind not in SCORE_KINDS:
            raise ConfigError(
                f"unknown score kind {self.kind!r}; expected one of {SCORE_KINDS}"
            )
        if self.kind == RAPS:
            if not np.isfinite(self.lam) or self.lam < 0.0:
                raise ConfigError(f"lam must be finite and >= 0, got {self.lam}")
            if self.k_reg < 1:
                raise ConfigError(f"k_reg must be >= 1, got {self.k_reg}")
            if num_classes is not None and self.k_reg > num_classes:
                raise ConfigError(
                    f"k_reg {self.k_reg} exceeds number of classes {num_classes}"
                )
        if not isinstance(self.seed, (int, np.integer)):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        return self

    def with_seed(self, seed: int) -> "ScoreConfig":
        return replace(self, seed=int(seed))


def row_uniforms(cfg: ScoreConfig, n: int, start: int = 0) -> np.ndarray:
    """The tie-break draw for rows start..start+n-1 under this config."""
    if cfg.kind != HPS and cfg.randomize:
        return indexed_uniforms(cfg.seed, n, start=start)
    return np.ones(n, dtype=np.float64)


def _cumulative(p: np.ndarray, ranks: np.ndarray, u: np.ndarray) -> np.ndarray:
    """sum_{l<r} p_(l) + u * p_(r) for each (row, candidate) pair.

    Capped at 1: the value is a probability mass, and summing a row in
    sorted order can land an ulp or two above the row's own total.
    """
    desc = -np.sort(-p, axis=1)
    csum = np.cumsum(desc, axis=1)
    rows = np.arange(p.shape[0])[:, None]
    at = ranks - 1
    v = csum[rows, at] - (1.0 - u)[:, None] * desc[rows, at]
    return np.minimum(v, 1.0)


def score_all(probs: ProbabilityMatrix, cfg: ScoreConfig) -> np.ndarray:
    """(n, K) scores for every candidate label of every row."""
    cfg = cfg.validated(probs.num_classes)
    p = probs.values
    if cfg.kind == HPS:
        return 1.0 - p
    ranks = label_ranks(probs)
    u = row_uniforms(cfg, p.shape[0])
    v = _cumulative(p, ranks, u)
    if cfg.kind == RAPS:
        v = v + cfg.lam * np.maximum(0, ranks - cfg.k_reg)
    return v


def score_true_labels(
    probs: ProbabilityMatrix, labels, cfg: ScoreConfig
) -> np.ndarray:
    """(n,) scores of each row's true label; a gather of score_all."""
    lab = validate_labels(labels, probs.n, probs.num_classes)
    return score_all(probs, cfg)[np.arange(probs.n), lab]


def score_pair(row, y: int, cfg: ScoreConfig, u: float = 1.0) -> float:
    """Score one (row, label) pair with an explicit tie-break value u.

    Matches score_all arithmetic exactly when handed the same u, which for
    row index i is row_uniforms(cfg, 1, start=i)[0].
    """
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise InputError(f"expected a single row, got shape {row.shape}")
    cfg = cfg.validated(row.shape[0])
    if not 0 <= y < row.shape[0]:
        raise InputError(f"label {y} outside [0, {row.shape[0]})")
    if cfg.kind == HPS:
        return float(1.0 - row[y])
    if not cfg.randomize:
        u = 1.0
    if not 0.0 <= u <= 1.0:
        raise InputError(f"tie-break u must be in [0, 1], got {u}")
    r = label_rank(row, y)
    desc = np.sort(row)[::-1]
    csum = np.cumsum(desc)
    v = min(csum[r - 1] - (1.0 - u) * desc[r - 1], 1.0)
    if cfg.kind == RAPS:
        v += cfg.lam * max(0, r - cfg.k_reg)
    return float(v)
