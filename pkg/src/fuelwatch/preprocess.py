"""Scaling and data splits.

Min-max parameters are always fitted on training data (normal-only in
the standard pipeline) and then applied everywhere else, so values seen
at detect time may legitimately fall outside [0, 1] - those are exactly
the observations the detector should flag, and no clamping is applied.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence, TypeVar

import numpy as np

from .dataset import FeatureMatrix, LabeledRecord
from .errors import DataError, UsageError

T = TypeVar("T")


@dataclass
class ScalerParams:
    """Per-feature minima and maxima, plus the feature names they belong to."""

    minimum: np.ndarray
    maximum: np.ndarray
    feature_names: list

    def __post_init__(self) -> None:
        self.minimum = np.asarray(self.minimum, dtype=float)
        self.maximum = np.asarray(self.maximum, dtype=float)
        if self.minimum.shape != self.maximum.shape:
            raise DataError("scaler min/max shapes differ")
        if np.any(self.minimum > self.maximum):
            raise DataError("scaler has min > max for some feature")

    def to_json(self) -> str:
        payload = {
            name: {"min": float(lo), "max": float(hi)}
            for name, lo, hi in zip(self.feature_names, self.minimum, self.maximum)
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ScalerParams":
        payload = json.loads(text)
        names = list(payload)
        return cls(
            minimum=np.array([payload[n]["min"] for n in names], dtype=float),
            maximum=np.array([payload[n]["max"] for n in names], dtype=float),
            feature_names=names,
        )


@dataclass(frozen=True)
class SplitSpec:
    """Three-way split: test cut first, then validation carved from train."""

    train_fraction: float = 0.75
    validation_fraction_of_train: float = 0.10
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise UsageError("train_fraction must lie in (0, 1)")
        if not 0.0 <= self.validation_fraction_of_train < 1.0:
            raise UsageError("validation fraction must lie in [0, 1)")


def fit_scaler(train: FeatureMatrix) -> ScalerParams:
    """Column-wise extrema of the training matrix."""
    if train.n_observations < 1:
        raise DataError("cannot fit a scaler on an empty matrix")
    return ScalerParams(
        minimum=train.values.min(axis=1),
        maximum=train.values.max(axis=1),
        feature_names=list(train.feature_names),
    )


def _check_dims(x: FeatureMatrix, p: ScalerParams) -> None:
    if x.n_features != p.minimum.shape[0]:
        raise DataError(
            f"matrix has {x.n_features} features but scaler expects {p.minimum.shape[0]}"
        )


def transform(x: FeatureMatrix, p: ScalerParams) -> FeatureMatrix:
    """Map each entry to (x - min) / (max - min).

    Degenerate features (max == min) map to 0.  Out-of-range values are
    preserved, not clamped.
    """
    _check_dims(x, p)
    span = p.maximum - p.minimum
    safe_span = np.where(span == 0, 1.0, span)
    scaled = (x.values - p.minimum[:, None]) / safe_span[:, None]
    scaled[span == 0, :] = 0.0
    return FeatureMatrix(
        values=scaled,
        feature_names=list(x.feature_names),
        priority_feature=x.priority_feature,
    )


def inverse_transform(x_scaled: FeatureMatrix, p: ScalerParams) -> FeatureMatrix:
    """Undo ``transform``; degenerate features recover their fitted minimum."""
    _check_dims(x_scaled, p)
    span = p.maximum - p.minimum
    restored = x_scaled.values * span[:, None] + p.minimum[:, None]
    restored[span == 0, :] = p.minimum[span == 0, None]
    return FeatureMatrix(
        values=restored,
        feature_names=list(x_scaled.feature_names),
        priority_feature=x_scaled.priority_feature,
    )


def split(
    records: Sequence[T], spec: Optional[SplitSpec] = None
) -> tuple[list[T], list[T], list[T]]:
    """Partition records into (train, validation, test).

    The test cut is taken first - |test| = floor(M * (1 - train_fraction))
    - and the validation slice is then carved from the remaining train
    records.  The seeded shuffle makes partitions reproducible; there is
    no stratification.
    """
    spec = spec or SplitSpec()
    m = len(records)
    if m < 4:
        raise DataError(f"need at least 4 records to split, got {m}")
    indices = np.arange(m)
    if spec.shuffle:
        indices = np.random.default_rng(spec.seed).permutation(m)
    n_test = int(np.floor(m * (1.0 - spec.train_fraction)))
    test_idx = indices[:n_test]
    remaining = indices[n_test:]
    n_val = int(np.floor(len(remaining) * spec.validation_fraction_of_train))
    val_idx = remaining[:n_val]
    train_idx = remaining[n_val:]
    pick = lambda idx: [records[i] for i in idx]
    return pick(train_idx), pick(val_idx), pick(test_idx)


def strip_anomalies(
    train: Sequence[LabeledRecord],
) -> tuple[list[LabeledRecord], int]:
    """Keep only label-0 records; returns (retained, number removed)."""
    normal = [rec for rec in train if rec.label == 0]
    return normal, len(train) - len(normal)
