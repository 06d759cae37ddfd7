"""Figure rendering for the report paths.

Each function draws one figure from already-computed data and writes it
straight to file; nothing here recomputes pipeline results.  The Agg
backend keeps rendering headless.
"""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import CorrelationMatrix, ImportanceReport
from .detector import ThresholdDecision, severity_bounds
from .neuralnet import TrainTrace

_SEVERITY_COLORS = {"A": "#fdd49e", "B": "#fdbb84", "C": "#fc8d59", "D": "#d7301f"}


def _save(fig, path) -> None:
    # Empty metadata keeps PNG bytes identical across reruns.
    fig.savefig(path, dpi=150, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)


def plot_loss_curves(trace: TrainTrace, path) -> None:
    """Training and validation MAE per epoch."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    epochs = np.arange(1, len(trace.train_loss) + 1)
    ax.plot(epochs, trace.train_loss, label="training", lw=1.5)
    if trace.validation_loss and np.isfinite(trace.validation_loss).any():
        ax.plot(epochs, trace.validation_loss, label="validation", lw=1.5)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean absolute error")
    ax.legend()
    ax.grid(alpha=0.3)
    _save(fig, path)


def plot_sweep_curve(decision: ThresholdDecision, path) -> None:
    """Accuracy and TPR across the threshold grid, chosen point marked."""
    thresholds = [t for t, _, _ in decision.sweep]
    accuracy = [a for _, a, _ in decision.sweep]
    tpr = [r for _, _, r in decision.sweep]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(thresholds, accuracy, label="accuracy", lw=1.5)
    if all(r is not None for r in tpr):
        ax.plot(thresholds, tpr, label="TPR", lw=1.5)
    ax.axvline(decision.threshold, color="k", ls="--", lw=1,
               label=f"selected = {decision.threshold:.4g}")
    ax.set_xlabel("threshold")
    ax.set_ylabel("metric")
    ax.legend()
    ax.grid(alpha=0.3)
    _save(fig, path)


def plot_score_distribution(
    scores: Sequence[float], threshold: Optional[float], path
) -> None:
    """Histogram of anomaly scores with the severity bands shaded."""
    scores = np.asarray(scores, dtype=float)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.hist(scores, bins=60, color="#4292c6", edgecolor="white", lw=0.3)
    if threshold is not None and threshold > 0:
        bounds = severity_bounds(threshold)
        top = scores.max() if scores.size else 1.0
        for name, lower in bounds.items():
            if lower <= top:
                ax.axvline(lower, color=_SEVERITY_COLORS[name], lw=1.2)
                ax.text(lower, ax.get_ylim()[1] * 0.95, name,
                        color=_SEVERITY_COLORS[name], ha="left", va="top", fontsize=9)
    ax.set_xlabel("reconstruction-error score")
    ax.set_ylabel("count")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    _save(fig, path)


def plot_importance(report: ImportanceReport, path) -> None:
    """Horizontal bars, most important feature on top."""
    order = report.ranking[::-1]
    names = [report.feature_names[i] for i in order]
    values = [report.importances[i] for i in order]
    fig, ax = plt.subplots(figsize=(7, 0.35 * len(names) + 1.5))
    ax.barh(np.arange(len(names)), values, color="#41ab5d")
    ax.set_yticks(np.arange(len(names)))
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("relative importance (top = 100)")
    ax.grid(axis="x", alpha=0.3)
    _save(fig, path)


def plot_correlation(matrix: CorrelationMatrix, path) -> None:
    """Annotated heatmap of the feature correlation matrix."""
    n = len(matrix.feature_names)
    fig, ax = plt.subplots(figsize=(0.6 * n + 2, 0.6 * n + 2))
    image = ax.imshow(matrix.values, vmin=-1, vmax=1, cmap="RdBu_r")
    ax.set_xticks(np.arange(n))
    ax.set_yticks(np.arange(n))
    ax.set_xticklabels(matrix.feature_names, rotation=90, fontsize=7)
    ax.set_yticklabels(matrix.feature_names, fontsize=7)
    if n <= 20:
        for i in range(n):
            for j in range(n):
                ax.text(j, i, f"{matrix.values[i, j]:.2f}",
                        ha="center", va="center", fontsize=5)
    fig.colorbar(image, ax=ax, shrink=0.8)
    _save(fig, path)
