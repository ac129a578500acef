"""Recurrent botnet-traffic classifiers with explicit per-sample gradients.

A sample's feature vector of length F is treated as a sequence of F scalar
timesteps. Each scalar is lifted to ``embed_dim`` by a learned linear
projection, passes (for the ``cnn_lstm`` kind) through a 1-D convolution
with ReLU and max pooling, then through a single LSTM layer whose final
hidden state feeds a 2-way softmax. Inverted dropout is applied to the LSTM
input sequence and to the final hidden state, in train mode only; evaluation
is fully deterministic.

Weights are plain named numpy arrays. Training is per-sample SGD over
shuffled epochs and is a pure function of (initial params, dataset, config):
the shuffle order and every dropout mask come from one generator seeded with
``TrainConfig.seed``, so reruns reproduce the same trajectory bit for bit.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .datasets import Dataset
from .errors import BadIndex, EmptyDataset, FeatureLengthMismatch, IoError

INIT_SCALE = 0.1  # weights start uniform in [-INIT_SCALE, INIT_SCALE]

_KINDS = {"lstm": kernels.KIND_LSTM, "cnn_lstm": kernels.KIND_CNN_LSTM}


@dataclass(frozen=True)
class ArchConfig:
    """Architecture hyperparameters; conv/pool fields matter for cnn_lstm only."""

    kind: str = "lstm"
    hidden_size: int = 10
    embed_dim: int = 8
    dropout_rate: float = 0.5
    conv_filters: int = 16
    conv_kernel: int = 3
    pool_size: int = 2
    n_classes: int = 2

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {sorted(_KINDS)}, got {self.kind!r}")
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.conv_filters < 1 or self.conv_kernel < 1 or self.pool_size < 1:
            raise ValueError("conv_filters, conv_kernel and pool_size must be >= 1")
        if self.n_classes != 2:
            raise ValueError("only binary classification is supported")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 20
    seed: int = 0
    update_granularity: str = "per_sample"
    batch_size: int | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.update_granularity not in ("per_sample", "minibatch"):
            raise ValueError("update_granularity must be 'per_sample' or 'minibatch'")
        if self.update_granularity == "minibatch" and (self.batch_size or 0) < 1:
            raise ValueError("minibatch updates need batch_size >= 1")


@dataclass(frozen=True)
class ModelParams:
    """Immutable weight snapshot. ``n_features`` is stamped when known and
    guards every later forward against length-mismatched inputs."""

    arch: ArchConfig
    weights: dict = field(repr=False)
    seed: int = 0
    n_features: int | None = None

    def __post_init__(self):
        frozen = {}
        for name, arr in self.weights.items():
            a = np.array(arr, dtype=np.float64, order="C")
            a.setflags(write=False)
            frozen[name] = a
        object.__setattr__(self, "weights", frozen)

    def with_features(self, n_features: int) -> "ModelParams":
        return ModelParams(self.arch, dict(self.weights), self.seed, n_features)


@dataclass(frozen=True)
class PredictionDist:
    """A probability distribution over the two classes (benign=0, botnet=1)."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.shape != (2,):
            raise ValueError(f"expected 2 class probabilities, got shape {p.shape}")
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"not a probability distribution: {p}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def label(self) -> int:
        return int(np.argmax(self.probs))


def kernel_dims(arch: ArchConfig, n_features: int) -> dict:
    if arch.kind == "cnn_lstm" and n_features // arch.pool_size < 1:
        raise FeatureLengthMismatch(
            f"{n_features} features pool down to an empty sequence (pool_size={arch.pool_size})"
        )
    return dict(
        kind=_KINDS[arch.kind],
        n_steps=n_features,
        embed_dim=arch.embed_dim,
        hidden=arch.hidden_size,
        conv_filters=arch.conv_filters,
        conv_kernel=arch.conv_kernel,
        pool=arch.pool_size,
    )


def kernel_for(params: ModelParams, n_features: int | None = None) -> "kernels.Kernel":
    """A compute kernel loaded with a copy of ``params``' weights."""
    nf = n_features if n_features is not None else params.n_features
    if nf is None:
        raise FeatureLengthMismatch("model has no stamped feature count; pass n_features")
    if params.n_features is not None and nf != params.n_features:
        raise FeatureLengthMismatch(f"model built for {params.n_features} features, got {nf}")
    k = kernels.Kernel(**kernel_dims(params.arch, nf))
    k.load(params.weights)
    return k


def weight_shapes(arch: ArchConfig):
    kind = _KINDS[arch.kind]
    return kernels.weight_shapes(kind, arch.embed_dim, arch.hidden_size, arch.conv_filters, arch.conv_kernel)


def init_params(arch: ArchConfig, seed: int, n_features: int | None = None) -> ModelParams:
    """Fresh weights, uniform in [-0.1, 0.1], drawn in canonical tensor order."""
    rng = np.random.default_rng(seed)
    weights = {
        name: rng.uniform(-INIT_SCALE, INIT_SCALE, shape)
        for name, shape in weight_shapes(arch)
    }
    return ModelParams(arch, weights, seed, n_features)


def _check_x(params: ModelParams, x) -> np.ndarray:
    xa = np.ascontiguousarray(x, dtype=np.float64)
    if xa.ndim != 1:
        raise FeatureLengthMismatch(f"expected a 1-D feature vector, got shape {xa.shape}")
    if params.n_features is not None and xa.shape[0] != params.n_features:
        raise FeatureLengthMismatch(
            f"model built for {params.n_features} features, got {xa.shape[0]}"
        )
    return xa


def draw_masks(kernel, rng: np.random.Generator, rate: float):
    """Inverted-dropout masks for one train-mode pass; (None, None) when rate=0.

    Draw order (sequence mask, then hidden mask) is part of the reproducibility
    contract: every consumer of a training stream draws them identically.
    """
    if rate == 0.0:
        return None, None
    s1, s2 = kernel.mask_shapes
    keep = 1.0 - rate
    m1 = (rng.random(s1) >= rate) / keep
    m2 = (rng.random(s2) >= rate) / keep
    return m1, m2


def forward(params: ModelParams, x, mode: str = "eval", rng: np.random.Generator | None = None) -> PredictionDist:
    """One sample's class distribution. ``mode='train'`` draws dropout masks
    from ``rng``; eval mode is deterministic."""
    xa = _check_x(params, x)
    k = kernel_for(params, xa.shape[0])
    if mode == "train":
        if rng is None and params.arch.dropout_rate > 0:
            raise ValueError("train-mode forward needs an rng for dropout masks")
        m1, m2 = draw_masks(k, rng, params.arch.dropout_rate) if rng is not None else (None, None)
        return PredictionDist(k.forward(xa, m1, m2))
    if mode != "eval":
        raise ValueError(f"mode must be 'eval' or 'train', got {mode!r}")
    return PredictionDist(k.forward(xa))


def loss(params: ModelParams, x, y: int) -> float:
    """Cross-entropy of the eval-mode prediction, floored at PROB_FLOOR."""
    xa = _check_x(params, x)
    if y not in (0, 1):
        raise BadIndex(f"label must be 0 or 1, got {y}")
    k = kernel_for(params, xa.shape[0])
    p = k.forward(xa)
    return float(-np.log(max(p[y], kernels.PROB_FLOOR)))


def grad(params: ModelParams, x, y: int) -> dict:
    """Eval-mode gradient of the loss for one sample, as named arrays."""
    xa = _check_x(params, x)
    if y not in (0, 1):
        raise BadIndex(f"label must be 0 or 1, got {y}")
    k = kernel_for(params, xa.shape[0])
    k.loss_grad(xa, int(y))
    return {name: g.copy() for name, g in k.grads.items()}


def _check_dataset(params: ModelParams, d: Dataset):
    if d.n_samples == 0:
        raise EmptyDataset("dataset has no rows")
    if params.n_features is not None and d.n_features != params.n_features:
        raise FeatureLengthMismatch(
            f"model built for {params.n_features} features, dataset has {d.n_features}"
        )


def sgd_epoch(kernel, features, labels, indices, rng, lr, dropout_rate):
    """One shuffled pass of per-sample SGD over ``indices``.

    Stream contract: one permutation draw, then per visited sample the two
    dropout-mask draws. Everything that replays a training schedule (plain
    training, posterior collection, the poisoning passes) goes through here
    or replicates this exact order.
    """
    order = rng.permutation(indices)
    for i in order:
        m1, m2 = draw_masks(kernel, rng, dropout_rate)
        kernel.sgd_step(features[i], int(labels[i]), m1, m2, lr)
    return order


def _minibatch_epoch(kernel, features, labels, indices, rng, cfg, rate):
    order = rng.permutation(indices)
    acc = {name: np.zeros_like(g) for name, g in kernel.grads.items()}
    for start in range(0, len(order), cfg.batch_size):
        chunk = order[start:start + cfg.batch_size]
        for a in acc.values():
            a[...] = 0.0
        for i in chunk:
            m1, m2 = draw_masks(kernel, rng, rate)
            kernel.loss_grad(features[i], int(labels[i]), m1, m2)
            for name, g in kernel.grads.items():
                acc[name] += g
        scale = cfg.learning_rate / len(chunk)
        for name, a in acc.items():
            kernel.weights[name] -= scale * a


def train(params: ModelParams, d: Dataset, cfg: TrainConfig) -> ModelParams:
    """SGD-train a copy of ``params`` on ``d``; pure function of its inputs."""
    _check_dataset(params, d)
    k = kernel_for(params, d.n_features)
    rng = np.random.default_rng(cfg.seed)
    indices = np.arange(d.n_samples)
    rate = params.arch.dropout_rate
    for _ in range(cfg.epochs):
        if cfg.update_granularity == "per_sample":
            sgd_epoch(k, d.features, d.labels, indices, rng, cfg.learning_rate, rate)
        else:
            _minibatch_epoch(k, d.features, d.labels, indices, rng, cfg, rate)
    return ModelParams(params.arch, k.dump(), params.seed, d.n_features)


def predict_proba(params: ModelParams, d: Dataset) -> np.ndarray:
    """Eval-mode class probabilities for every row, shape (n, 2).

    An empty dataset is legal here and yields an empty result."""
    if params.n_features is not None and d.n_features != params.n_features:
        raise FeatureLengthMismatch(
            f"model built for {params.n_features} features, dataset has {d.n_features}"
        )
    out = np.empty((d.n_samples, 2))
    if d.n_samples == 0:
        return out
    k = kernel_for(params, d.n_features)
    for i in range(d.n_samples):
        out[i] = k.forward(d.features[i])
    return out


def predict_batch(params: ModelParams, d: Dataset) -> list[PredictionDist]:
    return [PredictionDist(p) for p in predict_proba(params, d)]


def loss_batch(params: ModelParams, d: Dataset) -> np.ndarray:
    """Per-row eval-mode cross-entropy losses."""
    if d.n_samples == 0:
        return np.empty(0)
    if params.n_features is not None and d.n_features != params.n_features:
        raise FeatureLengthMismatch(
            f"model built for {params.n_features} features, dataset has {d.n_features}"
        )
    k = kernel_for(params, d.n_features)
    out = np.empty(d.n_samples)
    floor = kernels.PROB_FLOOR
    for i in range(d.n_samples):
        p = k.forward(d.features[i])
        out[i] = -np.log(max(p[d.labels[i]], floor))
    return out


# -- checkpoints ------------------------------------------------------------

_CHECKPOINT_FORMAT = 1


def save_checkpoint(params: ModelParams, path) -> None:
    """Write a self-describing .npz archive with exact numeric round-trip."""
    meta = {
        "format": _CHECKPOINT_FORMAT,
        "arch": asdict(params.arch),
        "seed": params.seed,
        "n_features": params.n_features,
    }
    try:
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.str_(json.dumps(meta, sort_keys=True)), **params.weights)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> ModelParams:
    try:
        with open(path, "rb") as fh:
            data = io.BytesIO(fh.read())
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    with np.load(data) as npz:
        if "__meta__" not in npz:
            raise IoError(f"{path} is not a model checkpoint")
        meta = json.loads(str(npz["__meta__"][()]))
        if meta.get("format") != _CHECKPOINT_FORMAT:
            raise IoError(f"unsupported checkpoint format {meta.get('format')}")
        arch = ArchConfig(**meta["arch"])
        weights = {}
        for name, shape in weight_shapes(arch):
            if name not in npz:
                raise IoError(f"checkpoint is missing tensor {name}")
            if npz[name].shape != shape:
                raise IoError(f"checkpoint tensor {name} has shape {npz[name].shape}, expected {shape}")
            weights[name] = npz[name]
    return ModelParams(arch, weights, meta["seed"], meta["n_features"])
