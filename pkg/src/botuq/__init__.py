"""Uncertainty-aware botnet traffic classification lab.

Recurrent binary classifiers over network-flow feature vectors, a
weight-corruption poisoning attack on their training loop, an
uncertainty-metric sanitization defence, and two Bayesian-approximation
quantifiers (deep ensembles, Gaussian posteriors over SGD iterates),
wrapped in a deterministic experiment harness.
"""

from .attack import AttackConfig, PoisonSet, select_poison, wba, wba_update
from .datasets import (
    Dataset,
    NormStats,
    SplitSpec,
    SynthSpec,
    ceil_count,
    load_csv,
    normalize,
    save_csv,
    split,
    synth_generate,
)
from .defence import (
    DefenceConfig,
    ScoredDataset,
    defend_and_retrain,
    score_samples,
    umd,
)
from .errors import BotuqError
from .evaluation import ConfusionMatrix, MetricsReport, confusion, metrics
from .experiment import (
    CsvSource,
    ExperimentConfig,
    SynthSource,
    emit_charts,
    run_experiment,
    run_sweep,
)
from .kernels import BACKEND_NAME, PROB_FLOOR, available_backends
from .models import (
    ArchConfig,
    ModelParams,
    PredictionDist,
    TrainConfig,
    forward,
    init_params,
    load_checkpoint,
    predict_proba,
    save_checkpoint,
    train,
)
from .seeding import derive_seed
from .uncertainty import (
    DistSet,
    Ensemble,
    SwagPosterior,
    UncertaintyScore,
    akld,
    ensemble_predict,
    ensemble_train,
    entropy,
    kl_divergence,
    mutual_information,
    swag_fit,
    swag_predict,
    variance_value,
)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "PoisonSet", "select_poison", "wba", "wba_update",
    "Dataset", "NormStats", "SplitSpec", "SynthSpec", "ceil_count",
    "load_csv", "normalize", "save_csv", "split", "synth_generate",
    "DefenceConfig", "ScoredDataset", "defend_and_retrain", "score_samples", "umd",
    "BotuqError",
    "ConfusionMatrix", "MetricsReport", "confusion", "metrics",
    "CsvSource", "ExperimentConfig", "SynthSource",
    "emit_charts", "run_experiment", "run_sweep",
    "BACKEND_NAME", "PROB_FLOOR", "available_backends",
    "ArchConfig", "ModelParams", "PredictionDist", "TrainConfig",
    "forward", "init_params", "load_checkpoint", "predict_proba",
    "save_checkpoint", "train",
    "derive_seed",
    "DistSet", "Ensemble", "SwagPosterior", "UncertaintyScore",
    "akld", "ensemble_predict", "ensemble_train", "entropy",
    "kl_divergence", "mutual_information", "swag_fit", "swag_predict",
    "variance_value",
    "__version__",
]
