"""Confusion counts and the accuracy / detection-rate / false-alarm-rate metrics.

Undefined ratios (zero denominator) are ``None``, never 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ShapeError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fn: int
    tn: int
    fp: int

    def __post_init__(self):
        for name in ("tp", "fn", "tn", "fp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.tn + self.fp

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fn": self.fn, "tn": self.tn, "fp": self.fp}


def confusion(preds, labels, positive=1) -> ConfusionCounts:
    """Count outcomes treating ``positive`` as the attack side; everything else is negative."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ShapeError(f"{preds.shape[0] if preds.ndim else 0} predictions for "
                         f"{labels.shape[0] if labels.ndim else 0} labels")
    p = preds == positive
    t = labels == positive
    return ConfusionCounts(
        tp=int(np.sum(p & t)), fn=int(np.sum(~p & t)), tn=int(np.sum(~p & ~t)), fp=int(np.sum(p & ~t))
    )


def _ratio(num: int, den: int):
    return num / den if den > 0 else None


def metrics(counts: ConfusionCounts) -> tuple:
    """``(ACC, DR, FAR)``: (TP+TN)/total, TP/(TP+FN), FP/(FP+TN)."""
    return (
        _ratio(counts.tp + counts.tn, counts.total),
        _ratio(counts.tp, counts.tp + counts.fn),
        _ratio(counts.fp, counts.fp + counts.tn),
    )


@dataclass
class ClassMetrics:
    name: str
    counts: ConfusionCounts
    acc: float | None
    dr: float | None
    far: float | None


@dataclass
class MetricsReport:
    counts: ConfusionCounts
    acc: float | None
    dr: float | None
    far: float | None
    task: str = "binary"
    multiclass_acc: float | None = None
    per_class: list = field(default_factory=list)

    @classmethod
    def from_counts(cls, counts: ConfusionCounts, task="binary", **extra) -> "MetricsReport":
        return cls(counts, *metrics(counts), task=task, **extra)


def binary_report(preds, labels) -> MetricsReport:
    return MetricsReport.from_counts(confusion(preds, labels, positive=1))


def per_class_report(preds, labels, class_names) -> list:
    """One-vs-rest counts and metrics for every class, positive = that class."""
    rows = []
    for c, name in enumerate(class_names):
        counts = confusion(preds, labels, positive=c)
        rows.append(ClassMetrics(name, counts, *metrics(counts)))
    return rows


def evaluate(preds, labels, class_names, task="binary") -> MetricsReport:
    """Full report: attack-vs-normal counts (normal is class 0) plus one-vs-rest rows.

    For multiclass tasks ``multiclass_acc`` is the fraction of exactly right
    category predictions, kept separate from the binary-collapse ``acc``.
    """
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ShapeError(f"{preds.shape} predictions for {labels.shape} labels")
    counts = confusion((preds != 0).astype(int), (labels != 0).astype(int), positive=1)
    multi = _ratio(int(np.sum(preds == labels)), len(labels)) if task == "multiclass" else None
    return MetricsReport.from_counts(
        counts, task=task, multiclass_acc=multi, per_class=per_class_report(preds, labels, class_names)
    )


def mean_report(reports: list) -> dict:
    """Average each defined metric over fold reports (undefined entries are skipped)."""
    out = {}
    for key in ("acc", "dr", "far", "multiclass_acc"):
        vals = [getattr(r, key) for r in reports if getattr(r, key) is not None]
        out[key] = sum(vals) / len(vals) if vals else None
    return out
