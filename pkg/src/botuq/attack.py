"""Weight-corruption poisoning attack.

The attacker controls the training procedure, not the data: rows are never
modified. Against a freshly initialized model it ranks every training row by
loss, reserves the top ceil(eps*N) as the poison pool, and removes them from
the clean pool. Each pass then runs two phases of per-sample SGD:

    phase 1 (clean rows):   w <- w - lr * g(x, y, w)
    phase 2 (poison rows):  w <- w - lr * [g(x, y, w) + G(w)]

where G(w) is the coupling term tying every poison update to the whole
pool: the gradient of the mean loss over all poison rows, evaluated at the
current weights (eval mode, no dropout). It is recomputed for every poison
update, so one pass costs O(P^2) gradient evaluations in the pool size.

With eps = 0 the procedure degenerates to plain training: same shuffle
stream, same dropout masks, bit-identical weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import Dataset, ceil_count
from .errors import BadIndex, EmptyDataset, InvalidSpec, LengthMismatch
from .models import (
    ArchConfig,
    ModelParams,
    TrainConfig,
    draw_masks,
    init_params,
    kernel_for,
    loss_batch,
    sgd_epoch,
)


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 0.10
    learning_rate: float = 0.01
    seed: int = 0
    passes: int | None = None  # None: match the training epoch count

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidSpec("epsilon must be in [0, 1]")
        # zero is allowed: a no-op attack is well defined and useful in tests
        if self.learning_rate < 0:
            raise InvalidSpec("learning_rate must be >= 0")
        if self.passes is not None and self.passes < 1:
            raise InvalidSpec("passes must be >= 1")


@dataclass(frozen=True)
class PoisonSet:
    """Selected rows, sorted by descending loss (ties: lower index first)."""

    indices: np.ndarray
    losses: np.ndarray

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64)
        losses = np.array(self.losses, dtype=np.float64)
        if idx.shape != losses.shape or idx.ndim != 1:
            raise LengthMismatch(f"indices {idx.shape} vs losses {losses.shape}")
        if len(np.unique(idx)) != len(idx):
            raise BadIndex("poison indices must be distinct")
        if losses.size and (np.diff(losses) > 0).any():
            raise LengthMismatch("poison losses must be sorted non-increasing")
        idx.setflags(write=False)
        losses.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "losses", losses)

    @property
    def p(self) -> int:
        return len(self.indices)


def top_loss_indices(losses: np.ndarray, p: int) -> np.ndarray:
    """Indices of the p largest losses; ties broken toward lower index."""
    losses = np.asarray(losses)
    if p > losses.shape[0]:
        raise BadIndex(f"cannot select {p} rows from {losses.shape[0]}")
    order = np.lexsort((np.arange(losses.shape[0]), -losses))
    return order[:p].astype(np.int64)


def select_poison(params: ModelParams, d: Dataset, epsilon: float) -> PoisonSet:
    """Rank all rows by eval-mode loss and take the top ceil(eps*N)."""
    if d.n_samples == 0:
        raise EmptyDataset("cannot select poison from an empty dataset")
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidSpec("epsilon must be in [0, 1]")
    losses = loss_batch(params, d)
    p = ceil_count(epsilon, d.n_samples)
    idx = top_loss_indices(losses, p)
    return PoisonSet(idx, losses[idx])


def poison_mean_gradient(kernel, features, labels, poison_idx) -> dict:
    """G(w): gradient of the mean poison-pool loss at the current weights.

    Eval mode: the coupling is a function of the weights alone, not of any
    dropout draw. Leaves kernel.grads clobbered; callers read the returned
    dict, not the buffer.
    """
    acc = {name: np.zeros_like(g) for name, g in kernel.grads.items()}
    for i in poison_idx:
        kernel.loss_grad(features[i], int(labels[i]))
        for name in acc:
            acc[name] += kernel.grads[name]
    inv = 1.0 / len(poison_idx)
    for name in acc:
        acc[name] *= inv
    return acc


def wba_update(
    params: ModelParams,
    d: Dataset,
    poison: PoisonSet,
    cfg: AttackConfig,
    rng: np.random.Generator | None = None,
) -> ModelParams:
    """One full pass: clean phase then poison phase over the rows of ``d``.

    ``d`` is the complete training set; rows listed in ``poison`` form the
    poison pool and every other row the clean pool. ``rng`` threads one
    shuffle/mask stream across passes; when omitted a fresh generator is
    seeded from cfg.seed.
    """
    if d.n_samples == 0:
        raise EmptyDataset("empty training set")
    if poison.p and (poison.indices >= d.n_samples).any():
        raise BadIndex("poison indices out of range")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    clean_idx = np.setdiff1d(np.arange(d.n_samples), poison.indices)
    k = kernel_for(params, d.n_features)
    rate = params.arch.dropout_rate

    # phase 1: plain per-sample SGD on the clean pool
    sgd_epoch(k, d.features, d.labels, clean_idx, rng, cfg.learning_rate, rate)

    # phase 2: poison pool with the coupling term
    if poison.p:
        for i in rng.permutation(poison.indices):
            m1, m2 = draw_masks(k, rng, rate)
            coupling = poison_mean_gradient(k, d.features, d.labels, poison.indices)
            k.loss_grad(d.features[i], int(d.labels[i]), m1, m2)
            for name, g in k.grads.items():
                k.weights[name] -= cfg.learning_rate * (g + coupling[name])

    return ModelParams(params.arch, k.dump(), params.seed, d.n_features)


def wba(
    d: Dataset, arch: ArchConfig, tcfg: TrainConfig, cfg: AttackConfig
) -> tuple[ModelParams, PoisonSet]:
    """Run the full attack; returns (corrupted params, poison set).

    Starts from a fresh seed-derived init, selects the poison pool once
    against that init, then applies ``wba_update`` for ``passes`` passes
    (defaulting to the training epoch count so attacked and clean models
    spend equal update budgets). The data is never mutated; the output of
    the attack is the corrupted weight vector.
    """
    if tcfg.update_granularity != "per_sample":
        raise InvalidSpec("the attack is defined over per-sample updates")
    p0 = init_params(arch, cfg.seed, d.n_features)
    poison = select_poison(p0, d, cfg.epsilon)
    passes = cfg.passes if cfg.passes is not None else tcfg.epochs
    rng = np.random.default_rng(cfg.seed)
    p = p0
    for _ in range(passes):
        p = wba_update(p, d, poison, cfg, rng)
    return p, poison


def poison_rows_csv(poison: PoisonSet, path) -> None:
    """Write the selected rows as (index, loss) CSV for audit."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "loss"])
        for i, l in zip(poison.indices, poison.losses):
            writer.writerow([int(i), repr(float(l))])
