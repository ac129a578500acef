"""Confusion-matrix metrics.

The positive class is botnet (label 1) everywhere, so FPR carries its
security meaning: the fraction of benign traffic flagged as botnet. A
metric whose denominator is zero is reported as 0 and its name recorded in
``degenerate_flags`` rather than raised, so sweeps keep running through
degenerate (for instance constant-output) models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMatrix, LengthMismatch, NonBinaryLabel


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(preds, truth) -> ConfusionMatrix:
    """Exact counts; positive class = 1 (botnet)."""
    p = np.asarray(preds).ravel()
    t = np.asarray(truth).ravel()
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.shape[0]} predictions vs {t.shape[0]} labels")
    for arr, what in ((p, "prediction"), (t, "label")):
        bad = ~np.isin(arr, (0, 1))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise NonBinaryLabel(row, f"{what} {arr[row]!r}")
    p = p.astype(np.int64)
    t = t.astype(np.int64)
    return ConfusionMatrix(
        tp=int(((p == 1) & (t == 1)).sum()),
        tn=int(((p == 0) & (t == 0)).sum()),
        fp=int(((p == 1) & (t == 0)).sum()),
        fn=int(((p == 0) & (t == 1)).sum()),
    )


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    fpr: float
    tpr: float
    f1: float
    degenerate_flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "degenerate_flags", frozenset(self.degenerate_flags))
        for name in ("accuracy", "precision", "recall", "fpr", "tpr", "f1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} out of [0, 1]: {v}")

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "fpr": self.fpr,
            "tpr": self.tpr,
            "f1": self.f1,
        }


def _ratio(num: int, den: int, name: str, flags: set) -> float:
    if den == 0:
        flags.add(name)
        return 0.0
    return num / den


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Standard binary metrics; recall and tpr share one formula."""
    if cm.total == 0:
        raise EmptyMatrix("no evaluated samples")
    flags: set = set()
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", flags)
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", flags)
    fpr = _ratio(cm.fp, cm.fp + cm.tn, "fpr", flags)
    if "recall" in flags:
        flags.add("tpr")
    if precision + recall == 0:
        flags.add("f1")
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricsReport(accuracy, precision, recall, fpr, recall, f1, frozenset(flags))
