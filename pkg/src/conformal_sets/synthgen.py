"""Synthetic probability matrices with controllable difficulty.

A SyntheticWorld draws class-conditional probability rows by softmaxing
Gaussian logits: each row starts from K standard normal draws, the true
class logit gets a boost (the per-class sharpness times the world
temperature), and the softmax is mixed with a uniform floor.  Raising the
temperature makes the classifier sharper (true label ranked 1 more often);
raising the noise flattens every row toward uniform.

Three imbalance profiles produce long-tailed per-class counts from a total
budget, and oracle_coverage runs repeated calibrate/predict/evaluate cycles
against freshly sampled worlds to estimate coverage by Monte Carlo.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import calibration
from .calibration import CCP, MARGINAL, RC3P, CalibrationModel, OPTION_II
from .core import ProbabilityMatrix, probability_matrix
from .errors import ConfigError, InputError
from .metrics import evaluate
from .prediction import predict
from .rng import derive_seed
from .scores import ScoreConfig

EXP = "exp"
POLY = "poly"
MAJ = "maj"
DECAY_KINDS = (EXP, POLY, MAJ)

THREADS_ENV = "CONFORMAL_SETS_THREADS"


@dataclass(frozen=True)
class DecaySpec:
    """Long-tailed training-count profile.

    With base b = n_train / K and classes numbered c = 1..K:
      exp:  floor(b * rho ** (c / K))
      poly: floor(b / sqrt(c / (10 * rho) + 1))
      maj:  floor(b) for class 1, floor(b * rho) for the rest
    Every count is clamped to at least 1.
    """

    kind: str
    rho: float
    n_train: int
    num_classes: int

    def validated(self) -> "DecaySpec":
        if self.kind not in DECAY_KINDS:
            raise ConfigError(
                f"unknown decay kind {self.kind!r}; expected one of {DECAY_KINDS}"
            )
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError(f"rho must be in (0, 1], got {self.rho}")
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if self.n_train < self.num_classes:
            raise ConfigError(
                f"n_train {self.n_train} smaller than the number of classes"
            )
        return self


def decay_counts(spec: DecaySpec) -> np.ndarray:
    """Per-class counts for the profile, clamped to >= 1."""
    spec = spec.validated()
    k = spec.num_classes
    base = spec.n_train / k
    c = np.arange(1, k + 1, dtype=np.float64)
    if spec.kind == EXP:
        raw = base * spec.rho ** (c / k)
    elif spec.kind == POLY:
        raw = base / np.sqrt(c / (10.0 * spec.rho) + 1.0)
    else:
        raw = np.full(k, base * spec.rho)
        raw[0] = base
    return np.maximum(np.floor(raw).astype(np.int64), 1)


@dataclass(frozen=True)
class SyntheticWorld:
    """Fixed data-generating process; seed controls every draw."""

    num_classes: int
    temperature: float
    noise: float
    seed: int
    class_priors: tuple | None = None
    sharpness: tuple | None = None

    def validated(self) -> "SyntheticWorld":
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if not (math.isfinite(self.temperature) and self.temperature >= 0.0):
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError(f"noise must be in [0, 1], got {self.noise}")
        for name, tup in (("class_priors", self.class_priors),
                          ("sharpness", self.sharpness)):
            if tup is not None:
                if len(tup) != self.num_classes:
                    raise ConfigError(
                        f"{name} must have length {self.num_classes}, got {len(tup)}"
                    )
                if any(not math.isfinite(v) or v < 0.0 for v in tup):
                    raise ConfigError(f"{name} entries must be finite and >= 0")
        if self.class_priors is not None and sum(self.class_priors) <= 0.0:
            raise ConfigError("class_priors must have positive total mass")
        return self


def prior_counts(world: SyntheticWorld, n_total: int) -> np.ndarray:
    """Deterministic class counts approximating the world's priors.

    Largest-remainder apportionment of n_total over the priors (uniform when
    unset); ties go to the lower class index.
    """
    world = world.validated()
    if n_total < 1:
        raise InputError(f"n_total must be >= 1, got {n_total}")
    k = world.num_classes
    pri = np.full(k, 1.0 / k) if world.class_priors is None else (
        np.asarray(world.class_priors, dtype=np.float64)
    )
    pri = pri / pri.sum()
    quota = pri * n_total
    counts = np.floor(quota).astype(np.int64)
    short = n_total - int(counts.sum())
    if short:
        # numpy argsort is stable, so equal remainders favor lower classes.
        order = np.argsort(-(quota - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def balanced_counts(num_classes: int, per_class: int) -> np.ndarray:
    if per_class < 0:
        raise InputError(f"per-class count must be >= 0, got {per_class}")
    return np.full(num_classes, per_class, dtype=np.int64)


def sample_world(world: SyntheticWorld, counts) -> tuple:
    """Draw (ProbabilityMatrix, labels) with counts[y] examples of class y.

    Deterministic in (world, counts).  Labels come out sorted by class; the
    pipeline is order-exchangeable, so no shuffle is applied.
    """
    world = world.validated()
    counts = np.asarray(counts, dtype=np.int64)
    k = world.num_classes
    if counts.shape != (k,):
        raise InputError(f"counts must have shape ({k},), got {counts.shape}")
    if np.any(counts < 0):
        raise InputError("counts must be >= 0")
    n = int(counts.sum())
    if n < 1:
        raise InputError("at least one example is required")
    labels = np.repeat(np.arange(k, dtype=np.int64), counts)
    boost = np.full(k, world.temperature)
    if world.sharpness is not None:
        boost = boost * np.asarray(world.sharpness, dtype=np.float64)
    rng = np.random.Generator(np.random.Philox(key=world.seed & (2**64 - 1)))
    z = rng.standard_normal((n, k))
    z[np.arange(n), labels] += boost[labels]
    z -= z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    if world.noise > 0.0:
        p = (1.0 - world.noise) * p + world.noise / k
    return probability_matrix(p, copy=False), labels


def read_thread_cap(env=os.environ) -> int:
    """Worker cap from CONFORMAL_SETS_THREADS; defaults to 1."""
    raw = env.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return 1
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if val < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {val}")
    return val


@dataclass(frozen=True)
class CoverageReport:
    """Per-replication coverage and set-size outcomes.

    coverage has shape (replications, K); apss, ucr and ucg have shape
    (replications,).  Means and standard deviations are derived views.
    """

    method: str
    alpha: float
    g: float
    replications: int
    coverage: np.ndarray
    apss: np.ndarray
    ucr: np.ndarray
    ucg: np.ndarray

    def coverage_mean(self) -> np.ndarray:
        return self.coverage.mean(axis=0)

    def coverage_std(self) -> np.ndarray:
        return self.coverage.std(axis=0, ddof=1 if self.replications > 1 else 0)

    def apss_mean(self) -> float:
        return float(self.apss.mean())

    def apss_std(self) -> float:
        return float(self.apss.std(ddof=1 if self.replications > 1 else 0))


def _calibrate(method, probs, labels, cfg, alpha, g, option):
    if method == MARGINAL:
        return calibration.calibrate_marginal(probs, labels, cfg, alpha, g)
    if method == CCP:
        return calibration.calibrate_ccp(probs, labels, cfg, alpha, g)
    if method == RC3P:
        return calibration.calibrate_rc3p(probs, labels, cfg, alpha, g, option=option)
    raise ConfigError(f"unknown method {method!r}")


def oracle_coverage(
    world: SyntheticWorld,
    counts_cal,
    counts_test,
    method: str,
    cfg: ScoreConfig,
    alpha: float,
    g: float = 0.0,
    replications: int = 1,
    option: int = OPTION_II,
    threads: int | None = None,
) -> CoverageReport:
    """Monte-Carlo coverage of one method on repeated draws from a world.

    Replication r redraws calibration and test sets from the world with
    seeds derived from (world.seed, r) and scores them with seeds derived
    from (cfg.seed, r), so replications are independent but the whole run
    is reproducible.  Worker threads only change wall time, never results.
    """
    world = world.validated()
    if replications < 1:
        raise ConfigError(f"replications must be >= 1, got {replications}")
    counts_cal = np.asarray(counts_cal, dtype=np.int64)
    counts_test = np.asarray(counts_test, dtype=np.int64)
    if np.any(counts_test < 1):
        raise InputError("every class needs at least one test example")
    if threads is None:
        threads = read_thread_cap()
    k = world.num_classes

    def one(rep: int):
        cal_world = SyntheticWorld(
            num_classes=k, temperature=world.temperature, noise=world.noise,
            seed=derive_seed(world.seed, rep, 0),
            class_priors=world.class_priors, sharpness=world.sharpness,
        )
        test_world = SyntheticWorld(
            num_classes=k, temperature=world.temperature, noise=world.noise,
            seed=derive_seed(world.seed, rep, 1),
            class_priors=world.class_priors, sharpness=world.sharpness,
        )
        rep_cfg = cfg.with_seed(derive_seed(cfg.seed, rep))
        cal_probs, cal_labels = sample_world(cal_world, counts_cal)
        test_probs, test_labels = sample_world(test_world, counts_test)
        model = _calibrate(method, cal_probs, cal_labels, rep_cfg, alpha, g, option)
        report = evaluate(predict(model, test_probs), test_labels, alpha)
        cov = np.array([c.coverage for c in report.per_class], dtype=np.float64)
        return cov, report.apss, report.ucr, report.ucg

    if threads > 1 and replications > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(replications)))
    else:
        results = [one(rep) for rep in range(replications)]

    coverage = np.stack([r[0] for r in results])
    apss = np.array([r[1] for r in results])
    ucr = np.array([r[2] for r in results])
    ucg = np.array([r[3] for r in results])
    return CoverageReport(
        method=method, alpha=float(alpha), g=float(g), replications=replications,
        coverage=coverage, apss=apss, ucr=ucr, ucg=ucg,
    )
