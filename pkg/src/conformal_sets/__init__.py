"""Split conformal prediction sets with class-conditional coverage.

The library operates on precomputed classifier probability matrices.  Three
calibration methods are provided: a single marginal threshold, class-wise
thresholds, and rank-filtered class-wise thresholds that additionally cap
each class's label rank to shrink prediction sets on hard, imbalanced
problems.
"""

from .calibration import (
    CCP,
    MARGINAL,
    OPTION_I,
    OPTION_II,
    RC3P,
    CalibrationModel,
    ClassRecord,
    MarginalRecord,
    calibrate_ccp,
    calibrate_marginal,
    calibrate_rc3p,
    configure_rank,
    conformal_quantile,
    effective_level,
)
from .core import (
    ProbabilityMatrix,
    estimate_topk_errors,
    label_rank,
    label_ranks,
    partition_by_class,
    probability_matrix,
    true_label_ranks,
)
from .errors import ConfigError, ConformalError, InputError, ParseError
from .io import (
    model_fingerprint,
    read_labels,
    read_model,
    read_probability_matrix,
    read_sets,
    write_labels,
    write_model,
    write_probability_matrix,
    write_sets,
)
from .metrics import (
    MetricsReport,
    RankFrequency,
    SigmaRecord,
    Theorem2Record,
    evaluate,
    rank_frequency,
    sigma_condition,
    theorem2_check,
)
from .prediction import (
    PredictionBatch,
    PredictionSet,
    predict,
    predict_ccp,
    predict_marginal,
    predict_rc3p,
)
from .scores import APS, HPS, RAPS, ScoreConfig, score_all, score_pair, score_true_labels
from .synthgen import (
    CoverageReport,
    DecaySpec,
    SyntheticWorld,
    balanced_counts,
    decay_counts,
    oracle_coverage,
    prior_counts,
    sample_world,
)

__version__ = "1.0.0"

__all__ = [
    "APS",
    "CCP",
    "CalibrationModel",
    "ClassRecord",
    "ConfigError",
    "ConformalError",
    "CoverageReport",
    "DecaySpec",
    "HPS",
    "InputError",
    "MARGINAL",
    "MarginalRecord",
    "MetricsReport",
    "OPTION_I",
    "OPTION_II",
    "ParseError",
    "PredictionBatch",
    "PredictionSet",
    "ProbabilityMatrix",
    "RAPS",
    "RC3P",
    "RankFrequency",
    "ScoreConfig",
    "SigmaRecord",
    "SyntheticWorld",
    "Theorem2Record",
    "balanced_counts",
    "calibrate_ccp",
    "calibrate_marginal",
    "calibrate_rc3p",
    "configure_rank",
    "conformal_quantile",
    "decay_counts",
    "effective_level",
    "estimate_topk_errors",
    "evaluate",
    "label_rank",
    "label_ranks",
    "model_fingerprint",
    "oracle_coverage",
    "partition_by_class",
    "predict",
    "predict_ccp",
    "predict_marginal",
    "predict_rc3p",
    "prior_counts",
    "probability_matrix",
    "rank_frequency",
    "read_labels",
    "read_model",
    "read_probability_matrix",
    "read_sets",
    "sample_world",
    "score_all",
    "score_pair",
    "score_true_labels",
    "sigma_condition",
    "theorem2_check",
    "true_label_ranks",
    "write_labels",
    "write_model",
    "write_probability_matrix",
    "write_sets",
    "__version__",
]
