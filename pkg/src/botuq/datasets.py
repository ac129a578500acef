"""Dataset ingestion, splitting, scaling and synthesis.

The canonical on-disk format is a header CSV whose last column is named
``label`` (0 = benign traffic, 1 = botnet traffic) and whose remaining
columns are numeric features. Real traffic captures are converted to this
layout once (see the README's dataset guide); everything downstream only
ever sees ``Dataset`` objects.

Datasets are immutable after construction: the arrays are copied in and
marked read-only, so they can be shared freely across threads and model
trainings.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DatasetTooSmall,
    FeatureCountMismatch,
    InvalidSpec,
    IoError,
    LengthMismatch,
    MissingLabelColumn,
    NonBinaryLabel,
    NonFiniteFeature,
    StatsLengthMismatch,
    UnparseableValue,
)

# Canonical feature counts for the two supported traffic corpora.
NBAIOT_FEATURES = 115
IOT23_FEATURES = 10

MIN_SPLIT_ROWS = 10


@dataclass(frozen=True)
class NormStats:
    """Per-feature min/max fitted on training data."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.array(self.mins, dtype=np.float64)
        maxs = np.array(self.maxs, dtype=np.float64)
        if mins.ndim != 1 or mins.shape != maxs.shape:
            raise StatsLengthMismatch(f"mins {mins.shape} vs maxs {maxs.shape}")
        if (maxs < mins).any():
            raise StatsLengthMismatch("max < min in normalization stats")
        mins.setflags(write=False)
        maxs.setflags(write=False)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray  # (n, f) float64, read-only
    labels: np.ndarray  # (n,) int64 in {0, 1}, read-only
    feature_names: tuple
    norm_stats: NormStats | None = None

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64, order="C")
        labs = np.array(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise LengthMismatch(f"features must be 2-D, got shape {feats.shape}")
        if labs.ndim != 1 or labs.shape[0] != feats.shape[0]:
            raise LengthMismatch(f"{feats.shape[0]} feature rows vs {labs.shape[0]} labels")
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != feats.shape[1]:
            raise LengthMismatch(f"{feats.shape[1]} feature columns vs {len(names)} names")
        if not np.isfinite(feats).all():
            raise NonFiniteFeature(f"dataset {self.name!r} contains NaN/inf features")
        if labs.size and not np.isin(labs, (0, 1)).all():
            bad = int(np.flatnonzero(~np.isin(labs, (0, 1)))[0])
            raise NonBinaryLabel(bad, str(self.labels[bad]))
        feats.setflags(write=False)
        labs.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices, name: str | None = None) -> "Dataset":
        """Rows at ``indices`` (order preserved) as a new Dataset."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            name if name is not None else self.name,
            self.features[idx],
            self.labels[idx],
            self.feature_names,
            self.norm_stats,
        )

    def class_counts(self) -> tuple:
        return int((self.labels == 0).sum()), int((self.labels == 1).sum())


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidSpec("train_fraction must be in (0, 1)")


@dataclass(frozen=True)
class SynthSpec:
    """Two Gaussian clusters whose means sit ``class_separation`` apart."""

    n: int = 2000
    features: int = 10
    class_separation: float = 4.0
    noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise InvalidSpec("n must be >= 2")
        if self.features < 1:
            raise InvalidSpec("features must be >= 1")
        if self.class_separation < 0:
            raise InvalidSpec("class_separation must be >= 0")
        if self.noise_std < 0:
            raise InvalidSpec("noise_std must be >= 0")


def ceil_count(fraction: float, n: int) -> int:
    """ceil(fraction * n) with protection against float fuzz.

    0.1 * 2000 evaluates to 200.00000000000003; a naive ceil would return
    201 rows where the contract says 200. Products within 1e-9 of an
    integer are treated as that integer.
    """
    t = fraction * n
    r = round(t)
    if abs(t - r) < 1e-9:
        return int(r)
    return int(math.ceil(t))


def load_csv(path, schema: int | None = None) -> Dataset:
    """Read a canonical CSV. ``schema`` pins the expected feature count."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[-1] != "label":
            raise MissingLabelColumn(f"{path}: header must end with a 'label' column")
        names = header[:-1]
        if schema is not None and len(names) != schema:
            raise FeatureCountMismatch(schema, len(names))
        feats = []
        labs = []
        for row_idx, row in enumerate(reader):
            if len(row) != len(header):
                raise UnparseableValue(row_idx, "<row>", f"expected {len(header)} fields, got {len(row)}")
            vals = np.empty(len(names))
            for j, cell in enumerate(row[:-1]):
                try:
                    vals[j] = float(cell)
                except ValueError:
                    raise UnparseableValue(row_idx, names[j], f"cannot parse {cell!r}") from None
                if not np.isfinite(vals[j]):
                    raise UnparseableValue(row_idx, names[j])
            try:
                lab = float(row[-1])
            except ValueError:
                raise NonBinaryLabel(row_idx, row[-1]) from None
            if lab not in (0.0, 1.0):
                raise NonBinaryLabel(row_idx, row[-1])
            feats.append(vals)
            labs.append(int(lab))
    features = np.vstack(feats) if feats else np.empty((0, len(names)))
    return Dataset(path.stem, features, np.asarray(labs, dtype=np.int64), tuple(names))


def save_csv(d: Dataset, path) -> None:
    """Write the canonical CSV form; float repr gives exact round-trips."""
    try:
        fh = open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    with fh:
        writer = csv.writer(fh)
        writer.writerow(list(d.feature_names) + ["label"])
        for i in range(d.n_samples):
            writer.writerow([repr(float(v)) for v in d.features[i]] + [str(int(d.labels[i]))])


def split(d: Dataset, spec: SplitSpec) -> tuple:
    """Deterministic train/test partition; stratified keeps class balance
    within one row per class. Row order within each side stays ascending."""
    n = d.n_samples
    if n < MIN_SPLIT_ROWS:
        raise DatasetTooSmall(f"need at least {MIN_SPLIT_ROWS} rows to split, got {n}")
    n_train = int(round(spec.train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    rng = np.random.default_rng(spec.seed)

    if spec.stratified:
        class_indices = [np.flatnonzero(d.labels == c) for c in (0, 1)]
        exact = [spec.train_fraction * len(ix) for ix in class_indices]
        take = [int(math.floor(e)) for e in exact]
        remainders = [e - t for e, t in zip(exact, take)]
        leftover = n_train - sum(take)
        for c in sorted(range(2), key=lambda c: (-remainders[c], c)):
            if leftover <= 0:
                break
            if take[c] < len(class_indices[c]):
                take[c] += 1
                leftover -= 1
        train_parts = []
        test_parts = []
        for c, ix in enumerate(class_indices):
            shuffled = rng.permutation(ix)
            train_parts.append(shuffled[: take[c]])
            test_parts.append(shuffled[take[c]:])
        train_idx = np.sort(np.concatenate(train_parts)).astype(np.int64)
        test_idx = np.sort(np.concatenate(test_parts)).astype(np.int64)
    else:
        perm = rng.permutation(n)
        train_idx = np.sort(perm[:n_train]).astype(np.int64)
        test_idx = np.sort(perm[n_train:]).astype(np.int64)

    return (
        d.subset(train_idx, f"{d.name}-train"),
        d.subset(test_idx, f"{d.name}-test"),
    )


def fit_norm_stats(d: Dataset) -> NormStats:
    if d.n_samples == 0:
        raise DatasetTooSmall("cannot fit normalization stats on an empty dataset")
    return NormStats(d.features.min(axis=0), d.features.max(axis=0))


def normalize(d: Dataset, stats: NormStats | None = None) -> tuple:
    """Min-max scale features ([0, 1] on the fitting data); constant features
    map to 0. Values outside the fitted range are not clipped."""
    if stats is None:
        stats = fit_norm_stats(d)
    if stats.mins.shape[0] != d.n_features:
        raise StatsLengthMismatch(
            f"stats cover {stats.mins.shape[0]} features, dataset has {d.n_features}"
        )
    scale = stats.maxs - stats.mins
    out = np.zeros_like(d.features)
    np.divide(d.features - stats.mins, scale, out=out, where=scale > 0)
    return Dataset(d.name, out, d.labels, d.feature_names, stats), stats


def synth_generate(spec: SynthSpec) -> Dataset:
    """Balanced two-cluster Gaussian data; deterministic per seed.

    Cluster means sit ``class_separation`` apart along the all-ones diagonal,
    with isotropic per-coordinate noise of ``noise_std``. Rows are shuffled so
    classes interleave.
    """
    rng = np.random.default_rng(spec.seed)
    n1 = spec.n // 2
    n0 = spec.n - n1
    labels = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    direction = np.ones(spec.features) / math.sqrt(spec.features)
    centers = np.stack([-0.5 * spec.class_separation * direction, 0.5 * spec.class_separation * direction])
    features = centers[labels] + spec.noise_std * rng.standard_normal((spec.n, spec.features))
    perm = rng.permutation(spec.n)
    name = f"synth-n{spec.n}-f{spec.features}-s{spec.seed}"
    names = tuple(f"f{j}" for j in range(spec.features))
    return Dataset(name, features[perm], labels[perm], names)
