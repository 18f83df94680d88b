"""Detection and classification metrics.

Detection is binary over (host, interval) pairs with "fault predicted" as
the positive class. Classification metrics run only over hosts whose true
label is a fault: hit rate checks whether the true class appears in the
top-k of the prototype ranking (k=1 by default), and NDCG credits the rank
of the true class with 1/log2(rank+1) (so a top-1 hit scores 1, a rank-2 hit
scores 1/log2(3)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass
class DetectionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @classmethod
    def from_pairs(cls, predicted, actual) -> "DetectionCounts":
        predicted = np.asarray(predicted, dtype=bool)
        actual = np.asarray(actual, dtype=bool)
        if predicted.shape != actual.shape:
            raise ValidationError("prediction/label shape mismatch")
        return cls(
            tp=int(np.sum(predicted & actual)),
            fp=int(np.sum(predicted & ~actual)),
            tn=int(np.sum(~predicted & ~actual)),
            fn=int(np.sum(~predicted & actual)),
        )

    def merge(self, other: "DetectionCounts") -> "DetectionCounts":
        return DetectionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class RankedPrediction:
    ranked: list[int]   # fault classes, best first
    true_class: int     # > 0


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    hr: float | None
    ndcg: float | None
    flags: list[str] = field(default_factory=list)

    def as_dict(self):
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "hr": self.hr,
            "ndcg": self.ndcg,
        }


def detection_metrics(counts: DetectionCounts):
    """Accuracy/precision/recall/F1 plus flags naming any zero-division that
    was reported as 0."""
    if counts.total < 1:
        raise ValidationError("no evaluated pairs")
    flags = []

    def safe_div(num, den, name):
        if den == 0:
            flags.append(f"{name}_undefined")
            return 0.0
        return num / den

    accuracy = (counts.tp + counts.tn) / counts.total
    precision = safe_div(counts.tp, counts.tp + counts.fp, "precision")
    recall = safe_div(counts.tp, counts.tp + counts.fn, "recall")
    f1 = safe_div(2 * precision * recall, precision + recall, "f1")
    return accuracy, precision, recall, f1, flags


def hit_rate(preds: list[RankedPrediction], k: int = 1) -> float | None:
    """Fraction of predictions whose top-k ranking contains the true class.
    None when there is nothing to evaluate."""
    if not preds:
        return None
    hits = sum(1 for p in preds if p.true_class in p.ranked[:k])
    return hits / len(preds)


def ndcg(preds: list[RankedPrediction]) -> float | None:
    if not preds:
        return None
    total = 0.0
    for p in preds:
        rank = p.ranked.index(p.true_class) + 1
        total += 1.0 / math.log2(rank + 1)
    return total / len(preds)


def full_report(counts: DetectionCounts, preds: list[RankedPrediction],
                hr_k: int = 1) -> MetricsReport:
    accuracy, precision, recall, f1, flags = detection_metrics(counts)
    return MetricsReport(accuracy, precision, recall, f1,
                         hit_rate(preds, k=hr_k), ndcg(preds), flags)
