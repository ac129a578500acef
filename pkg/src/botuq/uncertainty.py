"""Per-sample uncertainty measures and the two Bayesian approximations.

Given M member distributions for one sample (from an ensemble or from
posterior weight draws), four measures are computed, all in nats:

    entropy        H(p) = -sum_k p_k ln p_k              (0 ln 0 := 0)
    mutual information
                   MI = H(mean of members) - mean member entropy
    variance       population variance of the members' botnet-class
                   probability
    avg consecutive KL
                   AKLD = 1/(M-1) * sum_i KL(p_i || p_{i+1}), classes
                   summed, members in their pinned order, probabilities
                   floored at PROB_FLOOR inside the logs

The two quantifiers: a deep ensemble (S independently seeded trainings,
averaged) and a diagonal Gaussian posterior fitted over SGD iterates
(weight averaging with a second-moment estimate, sampled at predict time).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import Dataset
from .errors import EmptyDataset, InvalidK, InvalidT, LengthMismatch, SingleMember
from .kernels import PROB_FLOOR
from .models import (
    ArchConfig,
    ModelParams,
    PredictionDist,
    TrainConfig,
    init_params,
    kernel_for,
    sgd_epoch,
    train,
    weight_shapes,
)

BOTNET_CLASS = 1


@dataclass(frozen=True)
class DistSet:
    """An ordered set of member distributions for one sample.

    Member order is pinned (training/draw order); the consecutive-KL
    measure depends on it.
    """

    dists: tuple
    member_ids: tuple

    def __post_init__(self):
        dists = tuple(self.dists)
        ids = tuple(int(i) for i in self.member_ids)
        if len(dists) < 1:
            raise SingleMember("a DistSet needs at least one member")
        if len(dists) != len(ids):
            raise LengthMismatch(f"{len(dists)} dists vs {len(ids)} member ids")
        object.__setattr__(self, "dists", dists)
        object.__setattr__(self, "member_ids", ids)

    @property
    def m(self) -> int:
        return len(self.dists)

    def as_array(self) -> np.ndarray:
        return np.stack([d.probs for d in self.dists])

    @classmethod
    def from_array(cls, probs: np.ndarray, member_ids=None) -> "DistSet":
        probs = np.asarray(probs)
        ids = range(probs.shape[0]) if member_ids is None else member_ids
        return cls(tuple(PredictionDist(p) for p in probs), tuple(ids))

    def mean_dist(self) -> PredictionDist:
        return PredictionDist(self.as_array().mean(axis=0))


def _probs_of(p) -> np.ndarray:
    return np.asarray(p.probs if isinstance(p, PredictionDist) else p, dtype=np.float64)


def entropy(dist) -> float:
    """Shannon entropy in nats; 0 ln 0 taken as 0."""
    p = _probs_of(dist)
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return float(-terms.sum())


def mutual_information(ds: DistSet) -> float:
    """Entropy of the member mean minus mean member entropy (>= 0)."""
    member_h = [entropy(d) for d in ds.dists]
    return entropy(ds.mean_dist()) - float(np.mean(member_h))


def variance_value(ds: DistSet, class_index: int = BOTNET_CLASS) -> float:
    """Population variance of the members' probability for one class."""
    p = ds.as_array()[:, class_index]
    return float((p ** 2).mean() - p.mean() ** 2)


def kl_divergence(p, q) -> float:
    """KL(p || q) over classes with both arguments floored inside the logs."""
    pa = _probs_of(p)
    qa = _probs_of(q)
    logs = np.log(np.maximum(pa, PROB_FLOOR) / np.maximum(qa, PROB_FLOOR))
    return float((pa * logs).sum())


def akld(ds: DistSet) -> float:
    """Average KL between consecutive members, in pinned member order."""
    if ds.m < 2:
        raise SingleMember("consecutive-KL needs at least two members")
    arr = ds.as_array()
    total = sum(kl_divergence(arr[i], arr[i + 1]) for i in range(ds.m - 1))
    return total / (ds.m - 1)


def member_measures(probs: np.ndarray) -> np.ndarray:
    """All four measures for every sample of a batch.

    ``probs`` has shape (M, n, 2): M member distributions for each of n
    samples. Returns (n, 4) columns ordered (entropy of the member mean,
    mutual information, variance, consecutive KL).
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 3 or probs.shape[2] != 2:
        raise LengthMismatch(f"expected (M, n, 2) member probs, got {probs.shape}")
    n = probs.shape[1]
    out = np.empty((n, 4))
    for r in range(n):
        ds = DistSet.from_array(probs[:, r, :])
        out[r, 0] = entropy(ds.mean_dist())
        out[r, 1] = mutual_information(ds)
        out[r, 2] = variance_value(ds)
        out[r, 3] = akld(ds)
    return out


_TOL = 1e-9


@dataclass(frozen=True)
class UncertaintyScore:
    """The four raw measures for one sample plus its dataset-relative
    aggregate (mean of the four after min-max normalization, so in [0,1])."""

    entropy: float
    mutual_info: float
    variance: float
    akld: float
    aggregate: float

    def __post_init__(self):
        if not -_TOL <= self.entropy <= np.log(2.0) + _TOL:
            raise ValueError(f"two-class entropy out of range: {self.entropy}")
        for name in ("mutual_info", "variance", "akld"):
            if getattr(self, name) < -_TOL:
                raise ValueError(f"{name} below zero: {getattr(self, name)}")
        if not -_TOL <= self.aggregate <= 1.0 + _TOL:
            raise ValueError(f"aggregate out of [0, 1]: {self.aggregate}")


# -- deep ensembles ----------------------------------------------------------


@dataclass(frozen=True)
class Ensemble:
    members: tuple  # ModelParams, in seed order
    seeds: tuple

    def __post_init__(self):
        members = tuple(self.members)
        seeds = tuple(int(s) for s in self.seeds)
        if len(members) < 1:
            raise SingleMember("an ensemble needs at least one member")
        if len(members) != len(seeds):
            raise LengthMismatch(f"{len(members)} members vs {len(seeds)} seeds")
        if len(set(seeds)) != len(seeds):
            raise LengthMismatch("ensemble seeds must be distinct")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "seeds", seeds)

    @property
    def s(self) -> int:
        return len(self.members)


def ensemble_train(d: Dataset, arch: ArchConfig, cfg: TrainConfig, s: int, base_seed: int) -> Ensemble:
    """S independent trainings, member i seeded base_seed + i (init and
    shuffle stream alike)."""
    if s < 1:
        raise SingleMember("ensemble size must be >= 1")
    if d.n_samples == 0:
        raise EmptyDataset("cannot train an ensemble on an empty dataset")
    members = []
    seeds = []
    for i in range(s):
        seed = base_seed + i
        p0 = init_params(arch, seed, d.n_features)
        members.append(train(p0, d, replace(cfg, seed=seed)))
        seeds.append(seed)
    return Ensemble(tuple(members), tuple(seeds))


def ensemble_member_probs(e: Ensemble, d: Dataset) -> np.ndarray:
    """Eval probabilities of every member on every row, shape (S, n, 2)."""
    out = np.empty((e.s, d.n_samples, 2))
    for i, member in enumerate(e.members):
        k = kernel_for(member, d.n_features)
        for r in range(d.n_samples):
            out[i, r] = k.forward(d.features[r])
    return out


def ensemble_predict(e: Ensemble, x) -> tuple:
    """(mean distribution, botnet-class variance, member DistSet) for one x."""
    probs = np.stack([f.probs for f in (_member_forward(e, x))])
    ds = DistSet.from_array(probs, e.seeds)
    mean = ds.mean_dist()
    var = variance_value(ds)
    return mean, var, ds


def _member_forward(e: Ensemble, x):
    from .models import forward

    return [forward(m, x) for m in e.members]


# -- SGD-iterate Gaussian posterior -----------------------------------------


@dataclass(frozen=True)
class SwagPosterior:
    """Diagonal Gaussian over weights: mean, raw second moment, variance."""

    arch: ArchConfig
    theta_swa: dict = field(repr=False)
    second_moment: dict = field(repr=False)
    sigma_diag: dict = field(repr=False)
    t: int = 0
    n_features: int | None = None
    snapshots: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        for name, arr in self.sigma_diag.items():
            if (np.asarray(arr) < 0).any():
                raise ValueError(f"negative variance in {name}")


class _MomentAccumulator:
    """Streaming per-coordinate mean/variance over weight snapshots.

    Welford updates instead of naive sum-of-squares: identical snapshots
    must yield an exactly zero variance (the zero-variance posterior is
    contractually a point mass, so draws from it have to be bit-identical),
    and the cancellation in E[w^2] - E[w]^2 leaves float dust either side
    of zero.
    """

    def __init__(self, arch: ArchConfig):
        shapes = weight_shapes(arch)
        self.mean = {name: np.zeros(shape) for name, shape in shapes}
        self.m2 = {name: np.zeros(shape) for name, shape in shapes}
        self.count = 0

    def add(self, snap: dict) -> None:
        self.count += 1
        for name, m in self.mean.items():
            delta = snap[name] - m
            m += delta / self.count
            self.m2[name] += delta * (snap[name] - m)

    def moments(self) -> tuple:
        t = self.count
        theta = dict(self.mean)
        sigma = {name: np.maximum(v / t, 0.0) for name, v in self.m2.items()}
        second = {name: sigma[name] + theta[name] ** 2 for name in theta}
        return theta, second, sigma


def swag_fit(
    p0: ModelParams,
    d: Dataset,
    cfg: TrainConfig,
    t: int = 10,
    keep_snapshots: bool = False,
) -> SwagPosterior:
    """Continue SGD from a trained solution for ``t`` epochs, snapshot the
    weights after each, and fit mean/second-moment per coordinate.

    The variance is clamped at zero where rounding makes E[w^2] - E[w]^2
    marginally negative.
    """
    if t < 1:
        raise InvalidT(f"need at least one collection epoch, got {t}")
    if d.n_samples == 0:
        raise EmptyDataset("cannot collect posterior snapshots on an empty dataset")
    k = kernel_for(p0, d.n_features)
    rng = np.random.default_rng(cfg.seed)
    indices = np.arange(d.n_samples)
    rate = p0.arch.dropout_rate
    acc = _MomentAccumulator(p0.arch)
    snaps = []
    for _ in range(t):
        sgd_epoch(k, d.features, d.labels, indices, rng, cfg.learning_rate, rate)
        snap = k.dump()
        if keep_snapshots:
            snaps.append(snap)
        acc.add(snap)
    theta, second, sigma = acc.moments()
    return SwagPosterior(
        p0.arch, theta, second, sigma, t, d.n_features,
        tuple(snaps) if keep_snapshots else None,
    )


def swag_collect(p0: ModelParams, epoch_fn, t: int, keep_snapshots: bool = False) -> SwagPosterior:
    """Generalized snapshot collection: ``epoch_fn(params) -> params`` runs
    one further epoch of whatever schedule is being averaged over."""
    if t < 1:
        raise InvalidT(f"need at least one collection epoch, got {t}")
    acc = _MomentAccumulator(p0.arch)
    snaps = []
    p = p0
    for _ in range(t):
        p = epoch_fn(p)
        if keep_snapshots:
            snaps.append(dict(p.weights))
        acc.add(p.weights)
    theta, second, sigma = acc.moments()
    return SwagPosterior(
        p0.arch, theta, second, sigma, t, p0.n_features,
        tuple(snaps) if keep_snapshots else None,
    )


def swag_draw_weights(sp: SwagPosterior, k: int, seed: int) -> list:
    """K per-coordinate-independent Gaussian weight draws, deterministic per
    seed; tensors are drawn in canonical order."""
    if k < 1:
        raise InvalidK(f"need at least one draw, got {k}")
    rng = np.random.default_rng(seed)
    stds = {name: np.sqrt(sp.sigma_diag[name]) for name, _ in weight_shapes(sp.arch)}
    draws = []
    for _ in range(k):
        draws.append({
            name: sp.theta_swa[name] + stds[name] * rng.standard_normal(shape)
            for name, shape in weight_shapes(sp.arch)
        })
    return draws


def swag_member_probs(sp: SwagPosterior, d: Dataset, k: int, seed: int) -> np.ndarray:
    """Eval probabilities of every posterior draw on every row, (K, n, 2)."""
    draws = swag_draw_weights(sp, k, seed)
    out = np.empty((k, d.n_samples, 2))
    for i, w in enumerate(draws):
        member = ModelParams(sp.arch, w, seed, d.n_features)
        kern = kernel_for(member, d.n_features)
        for r in range(d.n_samples):
            out[i, r] = kern.forward(d.features[r])
    return out


def swag_predict(sp: SwagPosterior, x, k: int = 10, seed: int = 0) -> tuple:
    """(mean distribution, member DistSet) for one sample from K draws."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    draws = swag_draw_weights(sp, k, seed)
    probs = np.empty((k, 2))
    for i, w in enumerate(draws):
        member = ModelParams(sp.arch, w, seed, x.shape[0])
        kern = kernel_for(member, x.shape[0])
        probs[i] = kern.forward(x)
    ds = DistSet.from_array(probs)
    return ds.mean_dist(), ds
