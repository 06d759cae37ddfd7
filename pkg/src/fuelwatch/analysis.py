"""Feature importance and correlation analysis.

The importance ranking comes from a compact random forest built here
directly on numpy: bagged binary trees with Gini splits over sqrt(N)
random feature subsets.  Importance is the count-weighted impurity
decrease a feature achieves, summed over a tree and averaged over the
forest, then rescaled so the top feature reads 100.

Split ties are broken toward the lowest feature index and the lowest
threshold so a fixed seed always yields the same forest.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import FeatureMatrix
from .errors import DataError, UsageError


@dataclass(frozen=True)
class ImportanceReport:
    """Importances rescaled to max 100 plus the descending feature ranking."""

    importances: np.ndarray
    ranking: list
    feature_names: list
    raw_importances: np.ndarray


@dataclass(frozen=True)
class CorrelationMatrix:
    values: np.ndarray
    feature_names: list
    degenerate_features: list


def _gini_pair(zeros: np.ndarray, ones: np.ndarray) -> np.ndarray:
    total = zeros + ones
    with np.errstate(invalid="ignore", divide="ignore"):
        impurity = 1.0 - (zeros / total) ** 2 - (ones / total) ** 2
    return np.where(total > 0, impurity, 0.0)


def _best_split(
    values: np.ndarray, labels: np.ndarray, feature_subset: np.ndarray
) -> Optional[tuple[int, float, float]]:
    """Best (feature, threshold, impurity decrease) over the subset.

    Split rule is ``value <= threshold`` goes left, with the threshold
    taken as the left-hand sample value so the partition is float-exact.
    """
    m = labels.size
    total_ones = int(labels.sum())
    total_zeros = m - total_ones
    node_gini = float(_gini_pair(np.array(total_zeros), np.array(total_ones)))
    best: Optional[tuple[int, float, float]] = None
    for feature in np.sort(feature_subset):
        col = values[feature]
        order = np.argsort(col, kind="stable")
        sorted_vals = col[order]
        ones_prefix = np.cumsum(labels[order])
        boundaries = np.nonzero(np.diff(sorted_vals) > 0)[0]
        if boundaries.size == 0:
            continue
        left_n = boundaries + 1.0
        right_n = m - left_n
        left_ones = ones_prefix[boundaries].astype(float)
        left_zeros = left_n - left_ones
        right_ones = total_ones - left_ones
        right_zeros = total_zeros - left_zeros
        weighted = (
            left_n * _gini_pair(left_zeros, left_ones)
            + right_n * _gini_pair(right_zeros, right_ones)
        ) / m
        decreases = node_gini - weighted
        pick = int(np.argmax(decreases))  # first max = lowest threshold
        if best is None or decreases[pick] > best[2]:
            best = (int(feature), float(sorted_vals[boundaries[pick]]), float(decreases[pick]))
    if best is None or best[2] <= 0:
        return None
    return best


def _build_tree(
    values: np.ndarray,
    labels: np.ndarray,
    max_depth: int,
    subset_size: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Grow one tree; returns (per-feature impurity decrease, total decrease).

    Decreases are count-weighted: n_node * G_node - n_left * G_left -
    n_right * G_right, so summing the per-feature vector reproduces the
    tree's total exactly.
    """
    n_features = values.shape[0]
    importance = np.zeros(n_features)
    total = 0.0
    # (sample index array, depth) work stack; explicit to avoid recursion limits.
    stack = [(np.arange(labels.size), 0)]
    while stack:
        node_idx, depth = stack.pop()
        node_labels = labels[node_idx]
        if depth >= max_depth or node_idx.size < 2:
            continue
        if node_labels.min() == node_labels.max():
            continue
        subset = rng.choice(n_features, size=subset_size, replace=False)
        found = _best_split(values[:, node_idx], node_labels, subset)
        if found is None:
            continue
        feature, threshold, decrease = found
        weighted_decrease = decrease * node_idx.size
        importance[feature] += weighted_decrease
        total += weighted_decrease
        mask = values[feature, node_idx] <= threshold
        stack.append((node_idx[mask], depth + 1))
        stack.append((node_idx[~mask], depth + 1))
    return importance, total


def feature_importance(
    x: FeatureMatrix,
    labels: Sequence[int],
    trees: int = 100,
    max_depth: int = 8,
    seed: int = 0,
) -> ImportanceReport:
    """Gini importance of each feature for separating the two label classes.

    Needs at least two observations of each class.  Deterministic for a
    fixed seed; trees use bootstrap samples of the full training size.
    """
    labels = np.asarray(labels, dtype=int)
    if labels.size != x.n_observations:
        raise DataError("labels are not aligned with the feature matrix")
    if trees < 1:
        raise UsageError("need at least one tree")
    counts = np.bincount(labels, minlength=2)
    if counts[0] < 2 or counts[1] < 2:
        raise DataError("need at least 2 observations of each class")

    n_features = x.n_features
    subset_size = max(1, int(np.sqrt(n_features)))
    seeds = np.random.SeedSequence(seed).spawn(trees)
    accumulated = np.zeros(n_features)
    m = labels.size
    for tree_seed in seeds:
        rng = np.random.default_rng(tree_seed)
        sample = rng.integers(0, m, size=m)
        tree_importance, _ = _build_tree(
            x.values[:, sample], labels[sample], max_depth, subset_size, rng
        )
        accumulated += tree_importance
    raw = accumulated / trees
    peak = raw.max()
    rescaled = raw * (100.0 / peak) if peak > 0 else raw.copy()
    ranking = list(np.argsort(-rescaled, kind="stable"))
    return ImportanceReport(
        importances=rescaled,
        ranking=[int(i) for i in ranking],
        feature_names=list(x.feature_names),
        raw_importances=raw,
    )


def correlation_matrix(x: FeatureMatrix) -> CorrelationMatrix:
    """Pearson correlations between all feature pairs.

    Zero-variance features are flagged and given correlation 0 with
    everything else (1 with themselves).  The result is exactly
    symmetric with a unit diagonal, entries clamped to [-1, 1].
    """
    if x.n_observations < 2:
        raise DataError("need at least 2 observations for correlations")
    centered = x.values - x.values.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.sum(centered**2, axis=1))
    degenerate = np.nonzero(norms == 0)[0]
    safe = np.where(norms == 0, 1.0, norms)
    corr = (centered @ centered.T) / np.outer(safe, safe)
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    corr = (corr + corr.T) / 2.0  # bitwise-symmetric by commutativity
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return CorrelationMatrix(
        values=corr,
        feature_names=list(x.feature_names),
        degenerate_features=[int(i) for i in degenerate],
    )


def write_importance_csv(report: ImportanceReport, path) -> None:
    """Features in ranking order with their rescaled importances."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["feature", "importance"])
        for index in report.ranking:
            writer.writerow([report.feature_names[index], repr(float(report.importances[index]))])


def write_correlation_csv(matrix: CorrelationMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["feature"] + list(matrix.feature_names))
        for name, row in zip(matrix.feature_names, matrix.values):
            writer.writerow([name] + [repr(float(v)) for v in row])
