"""Prediction-set construction from a calibrated model.

All three methods threshold the candidate scores; rc3p additionally filters
by label rank.  Test rows draw fresh tie-break uniforms from a separate
stream (model seed XOR a fixed tag) so a row that appeared in calibration
does not reuse its calibration draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import CCP, MARGINAL, RC3P, CalibrationModel
from .core import ProbabilityMatrix, label_ranks
from .errors import ConfigError, InputError
from .io import model_fingerprint
from .rng import test_seed
from .scores import score_all


@dataclass(frozen=True)
class PredictionSet:
    """Sorted candidate labels retained for one test row."""

    row: int
    members: tuple

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class PredictionBatch:
    """One PredictionSet per test row, in row order.

    Carries the fingerprint of the producing model and the seed that drew
    the test-time tie-break uniforms, so output files are attributable.
    """

    sets: tuple
    num_classes: int
    model_fingerprint: str
    score_seed: int

    @property
    def n(self) -> int:
        return len(self.sets)

    def sizes(self) -> np.ndarray:
        return np.array([s.size for s in self.sets], dtype=np.int64)

    def membership(self) -> np.ndarray:
        """(n, K) boolean matrix; [i, y] says y is in row i's set."""
        out = np.zeros((self.n, self.num_classes), dtype=bool)
        for s in self.sets:
            out[s.row, list(s.members)] = True
        return out


def batch_from_membership(
    include: np.ndarray, num_classes: int, fingerprint: str = "", seed: int = 0
) -> PredictionBatch:
    sets = tuple(
        PredictionSet(i, tuple(int(y) for y in np.flatnonzero(include[i])))
        for i in range(include.shape[0])
    )
    return PredictionBatch(sets, num_classes, fingerprint, seed)


def _check_compat(model: CalibrationModel, probs: ProbabilityMatrix) -> None:
    if not isinstance(probs, ProbabilityMatrix):
        raise InputError("test probs must be a ProbabilityMatrix")
    if probs.num_classes != model.num_classes:
        raise InputError(
            f"model was calibrated for K={model.num_classes} classes but the "
            f"matrix has K={probs.num_classes}"
        )


def _test_scores(model: CalibrationModel, probs: ProbabilityMatrix):
    cfg = model.score_cfg.with_seed(test_seed(model.score_cfg.seed))
    return score_all(probs, cfg), cfg


def predict_marginal(model: CalibrationModel, probs: ProbabilityMatrix) -> PredictionBatch:
    if model.method != MARGINAL:
        raise ConfigError(f"expected a marginal model, got {model.method}")
    _check_compat(model, probs)
    scores, cfg = _test_scores(model, probs)
    include = scores <= model.marginal.q_hat
    return batch_from_membership(
        include, model.num_classes, model_fingerprint(model), cfg.seed
    )


def predict_ccp(model: CalibrationModel, probs: ProbabilityMatrix) -> PredictionBatch:
    if model.method != CCP:
        raise ConfigError(f"expected a ccp model, got {model.method}")
    _check_compat(model, probs)
    scores, cfg = _test_scores(model, probs)
    include = scores <= model.thresholds()[None, :]
    return batch_from_membership(
        include, model.num_classes, model_fingerprint(model), cfg.seed
    )


def predict_rc3p(model: CalibrationModel, probs: ProbabilityMatrix) -> PredictionBatch:
    if model.method != RC3P:
        raise ConfigError(f"expected an rc3p model, got {model.method}")
    _check_compat(model, probs)
    scores, cfg = _test_scores(model, probs)
    include = scores <= model.thresholds()[None, :]
    include &= label_ranks(probs) <= model.rank_limits()[None, :]
    return batch_from_membership(
        include, model.num_classes, model_fingerprint(model), cfg.seed
    )


_DISPATCH = {MARGINAL: predict_marginal, CCP: predict_ccp, RC3P: predict_rc3p}


def predict(model: CalibrationModel, probs: ProbabilityMatrix) -> PredictionBatch:
    """Dispatch on model.method."""
    try:
        fn = _DISPATCH[model.method]
    except KeyError:
        raise ConfigError(f"unknown method {model.method!r}") from None
    return fn(model, probs)
