"""Uncertainty-driven training-set sanitization.

The defender suspects the training pipeline was interfered with but has no
clean reference data, so the quantifier is trained on the suspect data
itself. Every row is scored with the four uncertainty measures, the
ceil(eps*N) highest-aggregate rows are popped, and a fresh model is trained
on the kept remainder (in its original row order).

The aggregate combines measures of different scales, so each one is min-max
normalized across the dataset first and the four normalized values are
averaged with equal weights. A measure that is constant across the dataset
carries no ranking information and normalizes to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .datasets import Dataset, ceil_count
from .errors import EmptyDataset, EmptyResult, InvalidSpec, LengthMismatch
from .models import ArchConfig, ModelParams, TrainConfig, init_params, train
from .seeding import derive_seed
from .uncertainty import (
    UncertaintyScore,
    ensemble_member_probs,
    ensemble_train,
    member_measures,
    swag_fit,
    swag_member_probs,
)

QUANTIFIERS = ("deep_ensemble", "swag")


@dataclass(frozen=True)
class DefenceConfig:
    epsilon: float = 0.10
    quantifier: str = "deep_ensemble"
    members: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise InvalidSpec("epsilon must be in [0, 1)")
        if self.quantifier not in QUANTIFIERS:
            raise InvalidSpec(f"quantifier must be one of {QUANTIFIERS}")
        if self.members < 1:
            raise InvalidSpec("members must be >= 1")


@dataclass(frozen=True)
class ScoredDataset:
    """Every row of ``base`` scored; ``ranking`` sorts rows by aggregate
    descending, ties broken toward the lower row index."""

    base: Dataset
    scores: tuple
    ranking: np.ndarray

    def __post_init__(self):
        scores = tuple(self.scores)
        ranking = np.array(self.ranking, dtype=np.int64)
        n = self.base.n_samples
        if len(scores) != n:
            raise LengthMismatch(f"{len(scores)} scores for {n} rows")
        if not np.array_equal(np.sort(ranking), np.arange(n)):
            raise LengthMismatch("ranking is not a permutation of the row indices")
        ranking.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "ranking", ranking)

    def aggregates(self) -> np.ndarray:
        return np.array([s.aggregate for s in self.scores])


def _minmax(v: np.ndarray) -> np.ndarray:
    lo, hi = v.min(), v.max()
    if hi - lo <= 0:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def scores_from_member_probs(probs: np.ndarray) -> tuple[tuple, np.ndarray]:
    """Scoring pipeline below the quantifier: member probabilities of shape
    (M, n, 2) in, (scores, ranking) out."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 3 and probs.shape[1] == 0:
        raise EmptyDataset("no rows to score")
    n = probs.shape[1] if probs.ndim == 3 else 0
    raw = member_measures(probs)  # validates the (M, n, 2) shape
    normalized = np.column_stack([_minmax(raw[:, j]) for j in range(4)])
    aggregate = normalized.mean(axis=1)
    scores = tuple(
        UncertaintyScore(raw[r, 0], raw[r, 1], raw[r, 2], raw[r, 3], aggregate[r])
        for r in range(n)
    )
    ranking = np.lexsort((np.arange(n), -aggregate))
    return scores, ranking


def quantifier_member_probs(
    d: Dataset, cfg: DefenceConfig, arch: ArchConfig, tcfg: TrainConfig
) -> np.ndarray:
    """Train the chosen quantifier on ``d`` and return its M per-row member
    distributions, shape (M, n, 2).

    Seeds are derived from cfg.seed per source of randomness, so the two
    quantifiers never share streams.
    """
    if d.n_samples == 0:
        raise EmptyDataset("cannot score an empty dataset")
    if cfg.quantifier == "deep_ensemble":
        base = derive_seed(cfg.seed, "ensemble")
        e = ensemble_train(d, arch, tcfg, cfg.members, base)
        return ensemble_member_probs(e, d)
    seed = derive_seed(cfg.seed, "swag")
    p0 = init_params(arch, seed, d.n_features)
    solution = train(p0, d, replace(tcfg, seed=seed))
    posterior = swag_fit(solution, d, replace(tcfg, seed=seed), t=cfg.members)
    return swag_member_probs(posterior, d, cfg.members, derive_seed(cfg.seed, "swag-draws"))


def score_samples(
    d: Dataset, cfg: DefenceConfig, arch: ArchConfig, tcfg: TrainConfig
) -> ScoredDataset:
    """Score every row of ``d`` with a quantifier trained on ``d`` itself."""
    probs = quantifier_member_probs(d, cfg, arch, tcfg)
    scores, ranking = scores_from_member_probs(probs)
    return ScoredDataset(d, scores, ranking)


def removal_order(scored: ScoredDataset, epsilon: float) -> np.ndarray:
    """The ceil(eps*N) rows to pop, in pop order (argmax first)."""
    p = ceil_count(epsilon, scored.base.n_samples)
    return scored.ranking[:p].copy()


def apply_removal(d: Dataset, removed: np.ndarray) -> Dataset:
    """Drop ``removed`` rows; the kept rows stay in their original order."""
    keep = np.setdiff1d(np.arange(d.n_samples), np.asarray(removed, dtype=np.int64))
    if keep.size == 0:
        raise EmptyResult("sanitization removed every row")
    return d.subset(keep, f"{d.name}-corrected")


def umd(d: Dataset, cfg: DefenceConfig, arch: ArchConfig, tcfg: TrainConfig) -> Dataset:
    """Pop the highest-uncertainty fraction, keep the rest for retraining."""
    n = d.n_samples
    if n == 0:
        raise EmptyDataset("cannot sanitize an empty dataset")
    p = ceil_count(cfg.epsilon, n)
    if n - p < 1:
        raise EmptyResult(f"popping {p} of {n} rows leaves nothing to train on")
    if p == 0:
        return d  # nothing to pop; skip the quantifier entirely
    scored = score_samples(d, cfg, arch, tcfg)
    return apply_removal(d, removal_order(scored, cfg.epsilon))


def defend_and_retrain(
    d: Dataset, cfg: DefenceConfig, arch: ArchConfig, tcfg: TrainConfig
) -> ModelParams:
    """Sanitize then train a fresh model on the kept rows.

    The retrain init is seed-derived from cfg.seed, so the defended model
    never inherits weights from the suspect pipeline.
    """
    corrected = umd(d, cfg, arch, tcfg)
    p0 = init_params(arch, derive_seed(cfg.seed, "retrain"), corrected.n_features)
    return train(p0, corrected, tcfg)


def sanitization_csv(
    scored: ScoredDataset,
    removed: np.ndarray,
    path,
    poison_indices: np.ndarray | None = None,
) -> None:
    """Audit trail of the popped rows: index, raw measures, aggregate, and
    (when ground truth is available) whether the row was truly poisoned."""
    import csv

    truth = set(int(i) for i in poison_indices) if poison_indices is not None else None
    header = ["index", "entropy", "mutual_info", "variance", "akld", "aggregate"]
    if truth is not None:
        header.append("in_poison")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in removed:
            s = scored.scores[int(i)]
            row = [
                int(i),
                repr(s.entropy),
                repr(s.mutual_info),
                repr(s.variance),
                repr(s.akld),
                repr(s.aggregate),
            ]
            if truth is not None:
                row.append(int(int(i) in truth))
            writer.writerow(row)
