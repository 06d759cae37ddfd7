"""Reconstruction-error scoring and threshold selection.

An observation's anomaly score is either the reconstruction error of the
priority feature (default - the feature importance analysis singles one
out) or the mean error across all features.  A verdict is *anomaly* when
the score strictly exceeds the threshold; scores exactly at a boundary
stay with the milder class.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .dataset import FeatureMatrix
from .errors import DataError, UsageError
from .neuralnet import AutoencoderModel, reconstruct
from .preprocess import ScalerParams, transform

SCORE_MODES = ("priority-feature", "mean")

SEVERITY_MULTIPLIERS = {"A": 1.0, "B": 2.0, "C": 4.0, "D": 8.0}


@dataclass(frozen=True)
class ReconstructionReport:
    """Per-observation reconstruction errors and the selected score."""

    per_feature_errors: np.ndarray
    priority_error: float
    mean_error: float
    score: float


@dataclass(frozen=True)
class ThresholdDecision:
    """Chosen threshold plus the sweep curve it was selected from."""

    threshold: float
    sweep: list  # (threshold, accuracy, tpr-or-None) tuples
    selection_rule: str = "max-mean-accuracy-tpr"
    warning: Optional[str] = None


@dataclass(frozen=True)
class SeverityClass:
    name: str
    lower_bound: float


def severity_bounds(base_threshold: float) -> dict:
    """Lower bound of each class: tau, 2 tau, 4 tau, 8 tau."""
    if base_threshold <= 0:
        raise UsageError("base threshold must be positive")
    return {
        name: base_threshold * mult for name, mult in SEVERITY_MULTIPLIERS.items()
    }


def score(
    model: AutoencoderModel,
    scaler: ScalerParams,
    observations: FeatureMatrix,
    score_mode: str = "priority-feature",
) -> list[ReconstructionReport]:
    """Score unscaled observations; scaling is applied internally."""
    if score_mode not in SCORE_MODES:
        raise UsageError(f"unknown score mode {score_mode!r}")
    if observations.n_features != model.input_width:
        raise DataError(
            f"observations have {observations.n_features} features but the model"
            f" expects {model.input_width}"
        )
    scaled = transform(observations, scaler)
    errors = np.abs(scaled.values - reconstruct(model, scaled.values))
    priority = observations.priority_feature
    reports = []
    for col in range(errors.shape[1]):
        per_feature = errors[:, col]
        priority_error = float(per_feature[priority])
        mean_error = float(per_feature.mean())
        reports.append(
            ReconstructionReport(
                per_feature_errors=per_feature,
                priority_error=priority_error,
                mean_error=mean_error,
                score=priority_error if score_mode == "priority-feature" else mean_error,
            )
        )
    return reports


def default_grid(scores: Sequence[float], points: int = 1000) -> np.ndarray:
    """Evenly spaced candidate thresholds spanning the observed scores."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise DataError("no scores to build a threshold grid from")
    lo, hi = float(scores.min()), float(scores.max())
    if lo == hi:
        return np.array([lo])
    return np.linspace(lo, hi, points)


def sweep_threshold(
    scores: Sequence[float],
    labels: Sequence[int],
    grid: Sequence[float],
) -> ThresholdDecision:
    """Evaluate accuracy and TPR over a threshold grid and pick the best.

    The selected threshold maximizes (accuracy + TPR) / 2, with ties
    going to the smaller threshold (favors recall).  If the labels
    contain a single class, TPR is undefined and selection falls back to
    accuracy alone, flagged via ``warning``.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    grid = np.asarray(grid, dtype=float)
    if scores.shape != labels.shape:
        raise DataError("scores and labels are not aligned")
    if scores.size == 0:
        raise DataError("nothing to sweep")
    if grid.size == 0:
        raise DataError("threshold grid is empty")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise DataError("threshold grid must be strictly increasing")

    positives = int(labels.sum())
    negatives = labels.size - positives
    preds = scores[None, :] > grid[:, None]  # (grid, observations)
    accuracy = (preds == labels[None, :]).mean(axis=1)
    if positives > 0:
        tpr = (preds & (labels[None, :] == 1)).sum(axis=1) / positives
    else:
        tpr = None

    warning = None
    if positives == 0:
        warning = "labels contain no anomalies; TPR undefined, selected by accuracy alone"
    elif negatives == 0:
        warning = "labels contain no normals; selected by accuracy alone"

    if warning is None:
        objective_curve = (accuracy + tpr) / 2.0
    else:
        objective_curve = accuracy
    best = int(np.argmax(objective_curve))  # first max = smallest threshold

    sweep = [
        (float(t), float(a), None if tpr is None else float(r))
        for t, a, r in zip(grid, accuracy, tpr if tpr is not None else np.full(grid.size, np.nan))
    ]
    return ThresholdDecision(threshold=float(grid[best]), sweep=sweep, warning=warning)


def classify(
    report: Union[ReconstructionReport, float], threshold: float
) -> str:
    """'anomaly' when the score strictly exceeds the threshold."""
    if threshold < 0:
        raise UsageError("threshold must be nonnegative")
    value = report.score if isinstance(report, ReconstructionReport) else float(report)
    return "anomaly" if value > threshold else "normal"


def severity(score_value: float, base_threshold: float) -> Optional[SeverityClass]:
    """Class A-D by doubling intervals above the base threshold.

    None means the score is at or below the threshold (normal).  Each
    interval is open below and closed above: a score of exactly twice
    the threshold is still class A.
    """
    bounds = severity_bounds(base_threshold)
    if score_value <= bounds["A"]:
        return None
    if score_value <= bounds["B"]:
        return SeverityClass("A", bounds["A"])
    if score_value <= bounds["C"]:
        return SeverityClass("B", bounds["B"])
    if score_value <= bounds["D"]:
        return SeverityClass("C", bounds["C"])
    return SeverityClass("D", bounds["D"])


def write_sweep_csv(decision: ThresholdDecision, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["threshold", "accuracy", "tpr"])
        for threshold, accuracy, tpr in decision.sweep:
            writer.writerow(
                [repr(threshold), repr(accuracy), "" if tpr is None else repr(tpr)]
            )


def write_results_csv(
    reports: Sequence[ReconstructionReport], threshold: float, path
) -> None:
    """Per-record score, verdict and severity class."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["record", "score", "verdict", "severity"])
        for index, report in enumerate(reports):
            verdict = classify(report, threshold)
            if verdict == "anomaly" and threshold > 0:
                cls = severity(report.score, threshold)
                severity_name = cls.name if cls is not None else ""
            else:
                severity_name = ""
            writer.writerow([index, repr(report.score), verdict, severity_name])
