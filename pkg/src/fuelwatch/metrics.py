"""Confusion-matrix construction and derived scalar metrics.

Cell naming follows the two-class layout used throughout the project:
true normal (TN), true anomaly (TA), false normal (FN = an actual anomaly
predicted normal) and false anomaly (FA = an actual normal predicted
anomaly).  Any metric whose denominator is zero is reported as ``None``
rather than silently coerced to 0 or 1, because a coerced value corrupts
threshold selection downstream.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

from .errors import DataError


@dataclass(frozen=True)
class ConfusionCounts:
    """Two-class confusion counts. ``label 1 = anomaly``."""

    tn: int
    ta: int
    fn: int
    fa: int

    def __post_init__(self) -> None:
        for name in ("tn", "ta", "fn", "fa"):
            if getattr(self, name) < 0:
                raise DataError(f"confusion count {name} is negative")

    @property
    def total(self) -> int:
        return self.tn + self.ta + self.fn + self.fa


@dataclass(frozen=True)
class MetricSet:
    """Scalar metrics derived from a confusion matrix.

    Fields are ``None`` when the defining ratio is 0/0.
    """

    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    fpr: Optional[float]
    specificity: Optional[float]
    f1: Optional[float]

    def to_json(self) -> str:
        """Serialize with explicit nulls for undefined entries."""
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def confusion(predictions: Iterable[int], labels: Iterable[int]) -> ConfusionCounts:
    """Tally predictions (1 = anomaly) against ground-truth labels."""
    preds = list(predictions)
    labs = list(labels)
    if len(preds) != len(labs):
        raise DataError(
            f"predictions ({len(preds)}) and labels ({len(labs)}) differ in length"
        )
    tn = ta = fn = fa = 0
    for p, y in zip(preds, labs):
        if y:
            if p:
                ta += 1
            else:
                fn += 1
        else:
            if p:
                fa += 1
            else:
                tn += 1
    return ConfusionCounts(tn=tn, ta=ta, fn=fn, fa=fa)


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


def compute_metrics(c: ConfusionCounts) -> MetricSet:
    """All scalar metrics for a confusion matrix.

    accuracy = (TN+TA)/total, precision = TA/(TA+FA), recall = TA/(TA+FN),
    FPR = FA/(FA+TN), specificity = TN/(TN+FA), F1 = harmonic mean of
    precision and recall.
    """
    if c.total == 0:
        raise DataError("cannot compute metrics for an empty confusion matrix")
    precision = _ratio(c.ta, c.ta + c.fa)
    recall = _ratio(c.ta, c.ta + c.fn)
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricSet(
        accuracy=(c.tn + c.ta) / c.total,
        precision=precision,
        recall=recall,
        fpr=_ratio(c.fa, c.fa + c.tn),
        specificity=_ratio(c.tn, c.tn + c.fa),
        f1=f1,
    )
