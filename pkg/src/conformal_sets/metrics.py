"""Coverage metrics and the size-accounting diagnostics.

evaluate() produces the coverage report: per-class coverage, under-coverage
ratio (fraction of evaluated classes whose coverage falls below 1 - alpha),
macro-averaged set size, and the total under-coverage gap.  Classes absent
from the test labels cannot be scored; they are excluded from the averages
(divisor adjusted) and logged.

The diagnostics compare a rank-filtered model against its class-wise
counterpart on the same data: rank_frequency tallies the ranks of covered
labels, sigma_condition computes the per-class count ratio whose being <= 1
certifies the rank-filtered sets are no larger on average, and
theorem2_check evaluates the sufficient condition implying that ratio
is <= 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .calibration import CCP, RC3P, CalibrationModel, effective_level
from .core import ProbabilityMatrix, label_ranks, partition_by_class, validate_labels
from .errors import ConfigError, InputError
from .prediction import PredictionBatch
from .scores import HPS, RAPS, score_all

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassMetrics:
    y: int
    n_test: int
    coverage: float | None
    mean_size: float | None
    under_covered: bool | None


@dataclass(frozen=True)
class RankFrequency:
    """Normalized histogram of label_rank over all (row, member) pairs."""

    freq: np.ndarray
    pairs: int

    @property
    def defined(self) -> bool:
        return self.pairs > 0


@dataclass(frozen=True)
class SigmaRecord:
    y: int
    numerator: int
    denominator: int

    @property
    def defined(self) -> bool:
        return self.denominator > 0

    @property
    def sigma(self) -> float | None:
        if not self.defined:
            return None
        return self.numerator / self.denominator


@dataclass(frozen=True)
class Theorem2Record:
    """Empirical B, D, and the budget comparison for one class.

    satisfied means B - D >= rhs, the sufficient condition for sigma_y <= 1.
    defined is False when no Y != y examples exist or the class itself is
    empty or degenerate, in which case the probabilities are meaningless.
    """

    y: int
    b: float
    d: float
    p_y: float
    rhs: float
    satisfied: bool
    defined: bool


@dataclass(frozen=True)
class MetricsReport:
    alpha: float
    num_classes: int
    n_test: int
    ucr: float
    apss: float
    ucg: float
    per_class: tuple
    absent: tuple = ()
    rank_freq: RankFrequency | None = None
    sigma: tuple | None = None
    thm2: tuple | None = None


def _membership(batch, num_classes: int | None):
    if isinstance(batch, PredictionBatch):
        if num_classes is not None and num_classes != batch.num_classes:
            raise InputError(
                f"batch has K={batch.num_classes} but K={num_classes} was given"
            )
        return batch.membership(), batch.num_classes
    if num_classes is None:
        raise InputError("num_classes is required when passing bare sets")
    arr = np.zeros((len(batch), num_classes), dtype=bool)
    for i, members in enumerate(batch):
        for y in members:
            if not 0 <= y < num_classes:
                raise InputError(f"set member {y} outside [0, {num_classes})")
            arr[i, y] = True
    return arr, num_classes


def evaluate(batch, labels, alpha: float, num_classes: int | None = None) -> MetricsReport:
    """Coverage metrics for one batch of prediction sets.

    batch is a PredictionBatch or a sequence of member tuples (then
    num_classes is required).  labels are the true test labels, aligned by
    row.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    include, k = _membership(batch, num_classes)
    n = include.shape[0]
    lab = validate_labels(labels, n, k)
    part = partition_by_class(lab, k)
    covered = include[np.arange(n), lab]
    sizes = include.sum(axis=1)

    target = 1.0 - alpha
    per_class = []
    absent = []
    ucr_hits = 0
    ucg = 0.0
    apss_terms = []
    for y in range(k):
        idx = part.indices[y]
        if idx.size == 0:
            absent.append(y)
            per_class.append(ClassMetrics(y, 0, None, None, None))
            continue
        cov = float(covered[idx].mean())
        mean_size = float(sizes[idx].mean())
        under = cov < target
        per_class.append(ClassMetrics(y, int(idx.size), cov, mean_size, under))
        ucr_hits += int(under)
        ucg += max(target - cov, 0.0)
        apss_terms.append(mean_size)
    if absent:
        log.warning(
            "classes %s absent from test labels; excluded from UCR/APSS/UCG",
            absent,
        )
    present = k - len(absent)
    if present == 0:
        raise InputError("no class present in the test labels")
    return MetricsReport(
        alpha=float(alpha),
        num_classes=k,
        n_test=n,
        ucr=ucr_hits / present,
        apss=float(np.mean(apss_terms)),
        ucg=float(ucg),
        per_class=tuple(per_class),
        absent=tuple(absent),
    )


def rank_frequency(batch, probs: ProbabilityMatrix, num_classes: int | None = None) -> RankFrequency:
    """P(k) over all (row, y in set) pairs; zero vector when no pairs."""
    include, k = _membership(batch, num_classes)
    if not isinstance(probs, ProbabilityMatrix):
        raise InputError("probs must be a ProbabilityMatrix")
    if probs.n != include.shape[0] or probs.num_classes != k:
        raise InputError(
            f"sets of shape {include.shape} do not align with matrix "
            f"({probs.n}, {probs.num_classes})"
        )
    ranks = label_ranks(probs)
    pair_ranks = ranks[include]
    pairs = int(pair_ranks.size)
    freq = np.zeros(k, dtype=np.float64)
    if pairs:
        counts = np.bincount(pair_ranks - 1, minlength=k)
        freq = counts / pairs
    return RankFrequency(freq=freq, pairs=pairs)


def _check_model_pair(model_rc3p: CalibrationModel, model_ccp: CalibrationModel):
    if model_rc3p.method != RC3P:
        raise ConfigError(f"first model must be rc3p, got {model_rc3p.method}")
    if model_ccp.method != CCP:
        raise ConfigError(f"second model must be ccp, got {model_ccp.method}")
    if model_rc3p.num_classes != model_ccp.num_classes:
        raise ConfigError(
            f"models disagree on K: {model_rc3p.num_classes} vs {model_ccp.num_classes}"
        )
    for name in ("alpha", "g", "score_cfg"):
        a, b = getattr(model_rc3p, name), getattr(model_ccp, name)
        if a != b:
            raise ConfigError(f"models disagree on {name}: {a!r} vs {b!r}")


def sigma_condition(
    model_rc3p: CalibrationModel,
    model_ccp: CalibrationModel,
    probs: ProbabilityMatrix,
    labels=None,
) -> tuple:
    """Per-class count ratio sigma_y on the supplied data.

    numerator: examples satisfying both rank-filtered conditions for y;
    denominator: examples under the class-wise threshold for y.  Scores use
    the models' own seed (the calibration stream), since the ratio is
    normally read on the calibration data the thresholds came from.
    """
    _check_model_pair(model_rc3p, model_ccp)
    if not isinstance(probs, ProbabilityMatrix):
        raise InputError("probs must be a ProbabilityMatrix")
    if probs.num_classes != model_rc3p.num_classes:
        raise InputError(
            f"model has K={model_rc3p.num_classes} but matrix has K={probs.num_classes}"
        )
    if labels is not None:
        validate_labels(labels, probs.n, probs.num_classes)
    v = score_all(probs, model_rc3p.score_cfg)
    ranks = label_ranks(probs)
    q_rc3p = model_rc3p.thresholds()
    q_ccp = model_ccp.thresholds()
    k_hat = model_rc3p.rank_limits()
    records = []
    for y in range(model_rc3p.num_classes):
        num = int(np.count_nonzero((v[:, y] <= q_rc3p[y]) & (ranks[:, y] <= k_hat[y])))
        den = int(np.count_nonzero(v[:, y] <= q_ccp[y]))
        records.append(SigmaRecord(y=y, numerator=num, denominator=den))
    return tuple(records)


def theorem2_check(
    model_rc3p: CalibrationModel,
    model_ccp: CalibrationModel,
    probs: ProbabilityMatrix,
    labels,
) -> tuple:
    """Empirical check of the sufficient condition for sigma_y <= 1.

    For each class y, conditioning on Y != y:
      D = P[rank(X, y) <= k_hat(y)],
      B = P[p_(rbar) <= q_ccp(y)] with rbar = floor((rank + 1) / 2), the
          candidate's half-rank order statistic (plus the flat lam shift
          for the penalized score).
    satisfied = (B - D >= p_y / (1 - p_y) * (alpha_eff_y - eps_y^{k_hat})).
    """
    _check_model_pair(model_rc3p, model_ccp)
    cfg = model_rc3p.score_cfg
    if cfg.kind == HPS:
        raise ConfigError("theorem2_check requires a cumulative score (aps or raps)")
    if not isinstance(probs, ProbabilityMatrix):
        raise InputError("probs must be a ProbabilityMatrix")
    if probs.num_classes != model_rc3p.num_classes:
        raise InputError(
            f"model has K={model_rc3p.num_classes} but matrix has K={probs.num_classes}"
        )
    lab = validate_labels(labels, probs.n, probs.num_classes)
    k = probs.num_classes
    n = probs.n
    ranks = label_ranks(probs)
    desc = -np.sort(-probs.values, axis=1)
    rbar = (ranks + 1) // 2
    rows = np.arange(n)[:, None]
    p_at_rbar = desc[rows, rbar - 1]
    shift = cfg.lam if cfg.kind == RAPS else 0.0
    q_ccp = model_ccp.thresholds()
    k_hat = model_rc3p.rank_limits()

    records = []
    by_class = {rec.y: rec for rec in model_rc3p.classes}
    for y in range(k):
        rec = by_class[y]
        mask = lab != y
        n_other = int(np.count_nonzero(mask))
        n_y = n - n_other
        if rec.degenerate or n_other == 0 or n_y == 0:
            records.append(Theorem2Record(y, 0.0, 0.0, n_y / n, 0.0, False, False))
            continue
        d = float((ranks[mask, y] <= k_hat[y]).mean())
        b = float((p_at_rbar[mask, y] + shift <= q_ccp[y]).mean())
        p_y = n_y / n
        alpha_eff = 1.0 - effective_level(model_rc3p.alpha, model_rc3p.g, rec.n_y)
        rhs = p_y / (1.0 - p_y) * (alpha_eff - rec.eps_at_khat)
        records.append(Theorem2Record(
            y=y, b=b, d=d, p_y=p_y, rhs=rhs,
            satisfied=bool(b - d >= rhs), defined=True,
        ))
    return tuple(records)


def attach_diagnostics(
    report: MetricsReport,
    rank_freq: RankFrequency | None = None,
    sigma: tuple | None = None,
    thm2: tuple | None = None,
) -> MetricsReport:
    """Return a copy of the report with diagnostic blocks filled in."""
    updates = {}
    if rank_freq is not None:
        updates["rank_freq"] = rank_freq
    if sigma is not None:
        updates["sigma"] = sigma
    if thm2 is not None:
        updates["thm2"] = thm2
    return replace(report, **updates)
