"""Calibration: conformal quantiles and the three model families.

A CalibrationModel holds everything prediction needs: per-class score
thresholds, per-class rank limits, and the score configuration.  Three
calibrators produce it:

* calibrate_marginal: one threshold from the pooled true-label scores.
* calibrate_ccp: one threshold per class from that class's scores.
* calibrate_rc3p: per class, a rank limit k_hat chosen from the class's
  top-k error curve and a threshold taken at the correspondingly relaxed
  level 1 - alpha_hat; prediction then requires both score <= q_hat and
  rank <= k_hat.

Levels are always clamped to LEVEL_CLAMP = 1 - 1e-12.  A level at the clamp
asks for an order statistic beyond the sample, so the threshold becomes +inf,
which keeps coverage rather than crashing when inflation pushes past 1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ProbabilityMatrix,
    TopKErrorTable,
    estimate_topk_errors,
    partition_by_class,
    validate_labels,
)
from .errors import ConfigError, ConformalError, InputError
from .scores import ScoreConfig, score_true_labels

log = logging.getLogger(__name__)

MARGINAL = "marginal"
CCP = "ccp"
RC3P = "rc3p"
METHODS = (MARGINAL, CCP, RC3P)

OPTION_I = 1
OPTION_II = 2

LEVEL_CLAMP = 1.0 - 1e-12

# Feasibility slack when auditing a stored model (pure float re-arithmetic);
# fresh calibrations satisfy the constraints exactly.
_AUDIT_TOL = 1e-12


def conformal_quantile(scores, level: float) -> float:
    """The m-th smallest score with m = ceil(level * (n + 1)).

    Returns +inf when the index exceeds the sample (m > n), including the
    empty-sample case; that is the standard finite-sample adjustment, not an
    error.
    """
    if not 0.0 < level < 1.0:
        raise ConfigError(f"level must be in (0, 1), got {level}")
    arr = np.asarray(scores, dtype=np.float64).ravel()
    if arr.size and np.any(np.isnan(arr)):
        raise InputError("scores contain NaN")
    n = arr.size
    m = math.ceil(level * (n + 1))
    if n == 0 or m > n:
        return math.inf
    return float(np.sort(arr)[m - 1])


def effective_level(alpha: float, g: float, n_y: int) -> float:
    """Inflated coverage level min(1 - alpha + g / sqrt(n_y), LEVEL_CLAMP)."""
    _check_alpha_g(alpha, g)
    if n_y < 1:
        raise InputError(f"class sample size must be >= 1, got {n_y}")
    return min(1.0 - alpha + g / math.sqrt(n_y), LEVEL_CLAMP)


def _check_alpha_g(alpha: float, g: float) -> None:
    if not (isinstance(alpha, (int, float)) and 0.0 < alpha < 1.0):
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    if not (isinstance(g, (int, float)) and math.isfinite(g) and g >= 0.0):
        raise ConfigError(f"g must be finite and >= 0, got {g}")


@dataclass(frozen=True)
class ClassRecord:
    """Per-class calibration outcome.

    For marginal-free methods: q_hat is the score threshold (+inf allowed),
    k_hat the rank limit in [1, K], alpha_hat the miscoverage budget spent on
    the score condition, eps_at_khat the estimated rank-miss rate at k_hat.
    Degenerate classes (absent from calibration data) carry q_hat=+inf,
    k_hat=K so their label is never excluded.
    """

    y: int
    q_hat: float
    k_hat: int
    alpha_hat: float
    n_y: int
    eps_at_khat: float
    degenerate: bool = False


@dataclass(frozen=True)
class MarginalRecord:
    q_hat: float
    n: int


@dataclass(frozen=True)
class CalibrationModel:
    method: str
    alpha: float
    g: float
    score_cfg: ScoreConfig
    num_classes: int
    classes: tuple = ()
    marginal: MarginalRecord | None = None

    def thresholds(self) -> np.ndarray:
        """(K,) per-class score thresholds."""
        if self.method == MARGINAL:
            return np.full(self.num_classes, self.marginal.q_hat)
        return np.array([c.q_hat for c in self.classes], dtype=np.float64)

    def rank_limits(self) -> np.ndarray:
        """(K,) per-class rank limits; K everywhere except RC3P classes."""
        if self.method == MARGINAL:
            return np.full(self.num_classes, self.num_classes, dtype=np.int64)
        return np.array([c.k_hat for c in self.classes], dtype=np.int64)


def _validate_inputs(probs, labels, cfg, alpha, g):
    if not isinstance(probs, ProbabilityMatrix):
        raise InputError("probs must be a ProbabilityMatrix")
    lab = validate_labels(labels, probs.n, probs.num_classes)
    cfg = cfg.validated(probs.num_classes)
    _check_alpha_g(alpha, g)
    return lab, cfg


def calibrate_marginal(
    probs: ProbabilityMatrix, labels, cfg: ScoreConfig, alpha: float, g: float = 0.0
) -> CalibrationModel:
    lab, cfg = _validate_inputs(probs, labels, cfg, alpha, g)
    scores = score_true_labels(probs, lab, cfg)
    level = effective_level(alpha, g, probs.n)
    q = conformal_quantile(scores, level)
    if math.isinf(q):
        log.warning("marginal threshold is +inf (n=%d too small for level %g)",
                    probs.n, level)
    return CalibrationModel(
        method=MARGINAL,
        alpha=float(alpha),
        g=float(g),
        score_cfg=cfg,
        num_classes=probs.num_classes,
        classes=(),
        marginal=MarginalRecord(q_hat=q, n=probs.n),
    )


def _degenerate_record(y: int, num_classes: int) -> ClassRecord:
    return ClassRecord(
        y=y, q_hat=math.inf, k_hat=num_classes, alpha_hat=0.0,
        n_y=0, eps_at_khat=0.0, degenerate=True,
    )


def calibrate_ccp(
    probs: ProbabilityMatrix, labels, cfg: ScoreConfig, alpha: float, g: float = 0.0
) -> CalibrationModel:
    lab, cfg = _validate_inputs(probs, labels, cfg, alpha, g)
    k = probs.num_classes
    scores = score_true_labels(probs, lab, cfg)
    part = partition_by_class(lab, k)
    records = []
    for y in range(k):
        n_y = int(part.counts[y])
        if n_y == 0:
            log.warning("class %d absent from calibration data; threshold +inf", y)
            records.append(_degenerate_record(y, k))
            continue
        level = effective_level(alpha, g, n_y)
        q = conformal_quantile(scores[part.indices[y]], level)
        records.append(ClassRecord(
            y=y, q_hat=q, k_hat=k, alpha_hat=1.0 - level,
            n_y=n_y, eps_at_khat=0.0,
        ))
    return CalibrationModel(
        method=CCP, alpha=float(alpha), g=float(g), score_cfg=cfg,
        num_classes=k, classes=tuple(records),
    )


def configure_rank(
    eps_table: TopKErrorTable,
    alpha_eff,
    option: int = OPTION_II,
    k_override: dict | None = None,
    alpha_hat_override: dict | None = None,
):
    """Choose per-class (k_hat, alpha_hat) from the top-k error curve.

    Default policy: k_hat = min{k : eps_y^k < alpha_eff_y} and
    alpha_hat = alpha_eff_y - eps_y^{k_hat}, the full remaining budget.
    Under option 1 a caller can instead pin k_hat and/or alpha_hat per class;
    every override is validated against the feasibility constraints
    eps_y^{k_hat} < alpha_eff_y and 0 <= alpha_hat <= alpha_eff_y - eps.

    Returns (k_hat, alpha_hat, eps_at_khat) as per-class arrays.  Degenerate
    classes get (K, 0.0, 0.0) and reject overrides.
    """
    if option not in (OPTION_I, OPTION_II):
        raise ConfigError(f"option must be {OPTION_I} or {OPTION_II}, got {option}")
    if option == OPTION_II and (k_override or alpha_hat_override):
        raise ConfigError("per-class overrides require option 1")
    k_override = dict(k_override or {})
    alpha_hat_override = dict(alpha_hat_override or {})
    k = eps_table.num_classes
    for key in (*k_override, *alpha_hat_override):
        if not 0 <= key < k:
            raise ConfigError(f"override for unknown class {key}")
    alpha_eff = np.asarray(alpha_eff, dtype=np.float64)
    if alpha_eff.shape != (k,):
        raise InputError(f"alpha_eff must have shape ({k},), got {alpha_eff.shape}")
    if np.any(alpha_eff <= 0.0) or np.any(alpha_eff >= 1.0):
        bad = int(np.argmax((alpha_eff <= 0.0) | (alpha_eff >= 1.0)))
        raise ConfigError(
            f"effective miscoverage for class {bad} is {alpha_eff[bad]:.6g}, "
            "must be in (0, 1)"
        )

    k_hat = np.full(k, k, dtype=np.int64)
    alpha_hat = np.zeros(k, dtype=np.float64)
    eps_at = np.zeros(k, dtype=np.float64)
    for y in range(k):
        if eps_table.degenerate[y]:
            if y in k_override or y in alpha_hat_override:
                raise ConfigError(f"class {y} is degenerate; override not applicable")
            continue
        a = float(alpha_eff[y])
        eps_row = eps_table.eps[y]
        if y in k_override:
            ky = int(k_override[y])
            if not 1 <= ky <= k:
                raise ConfigError(f"class {y}: k override {ky} outside [1, {k}]")
            if not eps_row[ky - 1] < a:
                raise ConfigError(
                    f"class {y}: k={ky} infeasible, eps {eps_row[ky - 1]:.6g} "
                    f">= budget {a:.6g}"
                )
        else:
            # eps_y^K = 0 < a guarantees a feasible k exists.
            ky = int(np.argmax(eps_row < a)) + 1
        budget = a - float(eps_row[ky - 1])
        if y in alpha_hat_override:
            ay = float(alpha_hat_override[y])
            if not 0.0 <= ay <= budget:
                raise ConfigError(
                    f"class {y}: alpha_hat override {ay:.6g} outside [0, {budget:.6g}]"
                )
        else:
            ay = budget
        k_hat[y] = ky
        alpha_hat[y] = ay
        eps_at[y] = eps_row[ky - 1]
    return k_hat, alpha_hat, eps_at


def calibrate_rc3p(
    probs: ProbabilityMatrix,
    labels,
    cfg: ScoreConfig,
    alpha: float,
    g: float = 0.0,
    option: int = OPTION_II,
    k_override: dict | None = None,
    alpha_hat_override: dict | None = None,
) -> CalibrationModel:
    lab, cfg = _validate_inputs(probs, labels, cfg, alpha, g)
    k = probs.num_classes
    scores = score_true_labels(probs, lab, cfg)
    part = partition_by_class(lab, k)
    table = estimate_topk_errors(probs, lab)

    # Degenerate classes have no effective level; feed a placeholder that
    # configure_rank never reads for them.
    alpha_eff = np.full(k, 0.5, dtype=np.float64)
    for y in range(k):
        if part.counts[y] > 0:
            alpha_eff[y] = 1.0 - effective_level(alpha, g, int(part.counts[y]))
    k_hat, alpha_hat, eps_at = configure_rank(
        table, alpha_eff, option=option,
        k_override=k_override, alpha_hat_override=alpha_hat_override,
    )

    records = []
    for y in range(k):
        n_y = int(part.counts[y])
        if n_y == 0:
            log.warning("class %d absent from calibration data; threshold +inf", y)
            records.append(_degenerate_record(y, k))
            continue
        level = min(1.0 - float(alpha_hat[y]), LEVEL_CLAMP)
        q = conformal_quantile(scores[part.indices[y]], level)
        records.append(ClassRecord(
            y=y, q_hat=q, k_hat=int(k_hat[y]), alpha_hat=float(alpha_hat[y]),
            n_y=n_y, eps_at_khat=float(eps_at[y]),
        ))
    model = CalibrationModel(
        method=RC3P, alpha=float(alpha), g=float(g), score_cfg=cfg,
        num_classes=k, classes=tuple(records),
    )
    audit_rank_feasibility(model, table=table, alpha_eff=alpha_eff)
    return model


def audit_rank_feasibility(
    model: CalibrationModel,
    table: TopKErrorTable | None = None,
    alpha_eff=None,
) -> None:
    """Check every non-degenerate class against the rank-budget constraints.

    Verifies eps_y^{k_hat} < alpha_eff_y and 0 <= alpha_hat <= alpha_eff_y -
    eps_y^{k_hat} from the stored fields (plus the error table when given).
    Raises ConformalError on violation; calibrate_rc3p runs this on every
    model it builds.
    """
    if model.method != RC3P:
        raise ConfigError(f"feasibility audit applies to rc3p models, not {model.method}")
    for rec in model.classes:
        if rec.degenerate:
            continue
        if alpha_eff is not None:
            a = float(np.asarray(alpha_eff)[rec.y])
        else:
            a = 1.0 - effective_level(model.alpha, model.g, rec.n_y)
        eps = rec.eps_at_khat
        if table is not None:
            eps_stored = float(table.eps[rec.y, rec.k_hat - 1])
            if eps_stored != rec.eps_at_khat:
                raise ConformalError(
                    f"class {rec.y}: stored eps {rec.eps_at_khat!r} does not match "
                    f"table value {eps_stored!r}"
                )
        if not eps < a:
            raise ConformalError(
                f"class {rec.y}: eps at k_hat ({eps:.6g}) >= budget ({a:.6g})"
            )
        if not -_AUDIT_TOL <= rec.alpha_hat <= a - eps + _AUDIT_TOL:
            raise ConformalError(
                f"class {rec.y}: alpha_hat {rec.alpha_hat:.6g} outside "
                f"[0, {a - eps:.6g}]"
            )
