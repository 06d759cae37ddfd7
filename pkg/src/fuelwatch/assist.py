"""Label-assistance controller.

After each training round the controller compares threshold verdicts
against the labeled assist set (the validation split - test labels are
never consulted here) and reaches one of three outcomes:

* stop - targets met, or the round budget is exhausted;
* update the threshold - some other grid point already meets both
  targets on the current model, so no retraining is needed;
* expand the hyper-parameter search - widen the ranges, probe a small
  candidate grid with short trainings, and retrain with the winner.

Every round appends one replayable entry to the audit log, and all
seeds are salted with the round index so a rerun reproduces the loop
byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import FeatureMatrix
from .detector import ThresholdDecision, default_grid, score, sweep_threshold
from .errors import DataError, NumericError, UsageError
from .metrics import ConfusionCounts, compute_metrics, confusion
from .neuralnet import (
    AutoencoderModel,
    TrainConfig,
    batch_mae,
    default_layer_plan,
    init_model,
    train,
)
from .preprocess import fit_scaler, transform

ACTION_STOP = "stop"
ACTION_UPDATE_THRESHOLD = "update_threshold"
ACTION_EXPAND_SEARCH = "expand_search"

# Salt multipliers keeping per-round and per-probe seed streams disjoint.
_ROUND_SALT = 7919
_PROBE_SALT = 104729

_PROBE_EPOCHS = 50


@dataclass(frozen=True)
class AssistTargets:
    """Metric floors the loop tries to reach on the assist labels."""

    min_accuracy: float
    min_recall: float
    max_rounds: int = 3

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_accuracy <= 1.0:
            raise UsageError("min_accuracy must lie in [0, 1]")
        if not 0.0 <= self.min_recall <= 1.0:
            raise UsageError("min_recall must lie in [0, 1]")
        if self.max_rounds < 1:
            raise UsageError("max_rounds must be at least 1")


@dataclass(frozen=True)
class SearchSpace:
    """Hyper-parameter ranges explored when targets stay out of reach."""

    learning_rate: tuple[float, float] = (0.005, 0.05)
    l2_lambda: tuple[float, float] = (1e-5, 1e-3)
    latent_widths: tuple[int, ...] = (4, 8, 12)
    epochs: tuple[int, ...] = (500,)

    def __post_init__(self) -> None:
        for lo, hi in (self.learning_rate, self.l2_lambda):
            if not 0 < lo < hi:
                raise UsageError("search ranges need 0 < lo < hi")
        if not self.latent_widths or not self.epochs:
            raise UsageError("latent width and epoch sets must be nonempty")


@dataclass(frozen=True)
class AssistAction:
    """Exactly one of stop / update-threshold / expand-search."""

    kind: str
    new_threshold: Optional[float] = None
    new_space: Optional[SearchSpace] = None

    @classmethod
    def stop(cls) -> "AssistAction":
        return cls(kind=ACTION_STOP)

    @classmethod
    def update_threshold(cls, tau: float) -> "AssistAction":
        return cls(kind=ACTION_UPDATE_THRESHOLD, new_threshold=tau)

    @classmethod
    def expand_search(cls, space: SearchSpace) -> "AssistAction":
        return cls(kind=ACTION_EXPAND_SEARCH, new_space=space)


@dataclass
class AssistData:
    """Unscaled train and validation splits with their labels."""

    train: FeatureMatrix
    train_labels: np.ndarray
    validation: FeatureMatrix
    validation_labels: np.ndarray


def assess(
    scores: Sequence[float],
    labels: Sequence[int],
    tau: float,
    targets: AssistTargets,
) -> tuple[ConfusionCounts, bool]:
    """Confusion at threshold ``tau`` plus whether both targets are met."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.size == 0:
        raise DataError("nothing to assess")
    if scores.shape != labels.shape:
        raise DataError("scores and labels are not aligned")
    counts = confusion((scores > tau).astype(int), labels)
    mset = compute_metrics(counts)
    ok_accuracy = mset.accuracy is not None and mset.accuracy >= targets.min_accuracy
    ok_recall = (
        targets.min_recall == 0.0
        or (mset.recall is not None and mset.recall >= targets.min_recall)
    )
    return counts, bool(ok_accuracy and ok_recall)


def widen(space: SearchSpace) -> SearchSpace:
    """Stretch the numeric ranges by 10x on each side, clipped to [1e-6, 1]."""
    def stretch(rng: tuple[float, float]) -> tuple[float, float]:
        lo = max(rng[0] / 10.0, 1e-6)
        hi = min(rng[1] * 10.0, 1.0)
        return (lo, hi)

    return dataclasses.replace(
        space, learning_rate=stretch(space.learning_rate), l2_lambda=stretch(space.l2_lambda)
    )


def decide(
    assessment: tuple[ConfusionCounts, bool],
    sweep: ThresholdDecision,
    targets: AssistTargets,
    round_index: int,
    space: SearchSpace,
) -> AssistAction:
    """Consensus rule, in precedence order: stop, move the threshold,
    widen the search.

    The threshold moves only to a sweep grid point that verifiably meets
    both targets on the assist labels; among those the most accurate one
    wins (ties to the smaller threshold).
    """
    if round_index > targets.max_rounds:
        raise UsageError("round index exceeds the round budget")
    _, meets = assessment
    if meets or round_index >= targets.max_rounds:
        return AssistAction.stop()
    candidates = [
        (tau, accuracy)
        for tau, accuracy, tpr in sweep.sweep
        if tpr is not None
        and accuracy >= targets.min_accuracy
        and tpr >= targets.min_recall
    ]
    if candidates:
        best_tau, _ = max(candidates, key=lambda c: (c[1], -c[0]))
        return AssistAction.update_threshold(best_tau)
    return AssistAction.expand_search(widen(space))


def _candidate_values(rng: tuple[float, float]) -> list[float]:
    lo, hi = rng
    return [lo, float(np.sqrt(lo * hi)), hi]


def _hidden_for(n_features: int, hidden_width: int, latent: int) -> int:
    """Hidden width for a candidate latent; widens when the configured
    hidden layer would not leave a proper funnel."""
    if latent < hidden_width:
        return hidden_width
    return max(latent + 1, (n_features + latent) // 2)


@dataclass
class _LoopState:
    learning_rate: float
    l2_lambda: float
    latent_width: int
    epochs: int
    batch_size: int

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def run_assist_loop(
    data: AssistData,
    cfg: TrainConfig,
    space: SearchSpace,
    targets: AssistTargets,
    *,
    hidden_width: int = 8,
    latent_width: int = 4,
    score_mode: str = "priority-feature",
    grid_points: int = 1000,
) -> tuple[AutoencoderModel, ThresholdDecision, list[dict]]:
    """Train-score-sweep-assess-decide until the controller stops.

    Returns the final model, the final threshold decision and the audit
    log (one dict per round).  The scaler is fitted on the normal
    portion of the training split; anomalous training records are
    dropped before training, per the standard pipeline.
    """
    if data.validation.n_observations == 0:
        raise DataError("assist loop needs a labeled validation split")
    normal_mask = np.asarray(data.train_labels, dtype=int) == 0
    normal_train = FeatureMatrix(
        values=data.train.values[:, normal_mask],
        feature_names=list(data.train.feature_names),
        priority_feature=data.train.priority_feature,
    )
    scaler = fit_scaler(normal_train)
    train_scaled = transform(normal_train, scaler)
    validation_scaled = transform(data.validation, scaler)
    val_labels = np.asarray(data.validation_labels, dtype=int)
    # Loss monitoring and probe selection use the normal validation
    # records only; anomalies would reward models that reconstruct them.
    val_normal_mask = val_labels == 0
    if val_normal_mask.any():
        monitor_values = validation_scaled.values[:, val_normal_mask]
    else:
        monitor_values = validation_scaled.values

    state = _LoopState(
        learning_rate=cfg.learning_rate,
        l2_lambda=cfg.l2_lambda,
        latent_width=latent_width,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
    )
    model: Optional[AutoencoderModel] = None
    sweep: Optional[ThresholdDecision] = None
    scores: Optional[np.ndarray] = None
    tau: Optional[float] = None
    next_seed: Optional[int] = None
    audit: list[dict] = []

    for round_index in range(1, targets.max_rounds + 1):
        if model is None:
            if next_seed is None:
                round_seed = cfg.seed + _ROUND_SALT * round_index
            else:
                round_seed = next_seed
            plan = default_layer_plan(
                data.train.n_features,
                _hidden_for(data.train.n_features, hidden_width, state.latent_width),
                state.latent_width,
            )
            round_cfg = TrainConfig(
                l2_lambda=state.l2_lambda,
                learning_rate=state.learning_rate,
                epochs=state.epochs,
                batch_size=state.batch_size,
                seed=round_seed,
            )
            try:
                model, _ = train(
                    init_model(plan, round_seed), train_scaled, monitor_values, round_cfg
                )
            except NumericError as exc:
                raise NumericError(f"round {round_index}: {exc}") from exc
            reports = score(model, scaler, data.validation, score_mode)
            scores = np.array([r.score for r in reports])
            sweep = sweep_threshold(scores, val_labels, default_grid(scores, grid_points))
            tau = sweep.threshold if tau is None else tau

        counts, meets = assess(scores, val_labels, tau, targets)
        mset = compute_metrics(counts)
        action = decide((counts, meets), sweep, targets, round_index, space)
        entry = {
            "round": round_index,
            "action": action.kind,
            "hyperparams": state.as_dict(),
            "threshold": tau,
            "accuracy": mset.accuracy,
            "recall": mset.recall,
        }
        if action.kind == ACTION_UPDATE_THRESHOLD:
            entry["new_threshold"] = action.new_threshold
        audit.append(entry)

        if action.kind == ACTION_STOP:
            break
        if action.kind == ACTION_UPDATE_THRESHOLD:
            tau = action.new_threshold
            continue
        # Expand: probe the widened space with short trainings, adopt the
        # candidate with the lowest validation MAE, retrain next round.
        space = action.new_space
        best_loss = np.inf
        probe_index = 0
        for latent in space.latent_widths:
            probe_plan = default_layer_plan(
                data.train.n_features,
                _hidden_for(data.train.n_features, hidden_width, latent),
                latent,
            )
            for lr in _candidate_values(space.learning_rate):
                for lam in _candidate_values(space.l2_lambda):
                    probe_index += 1
                    probe_seed = cfg.seed + _PROBE_SALT * round_index + probe_index
                    probe_cfg = TrainConfig(
                        l2_lambda=lam,
                        learning_rate=lr,
                        epochs=_PROBE_EPOCHS,
                        batch_size=state.batch_size,
                        seed=probe_seed,
                    )
                    try:
                        probe_model, _ = train(
                            init_model(probe_plan, probe_seed),
                            train_scaled,
                            monitor_values,
                            probe_cfg,
                        )
                    except NumericError as exc:
                        raise NumericError(f"round {round_index}: {exc}") from exc
                    loss = batch_mae(probe_model, monitor_values)
                    if loss < best_loss:
                        best_loss = loss
                        state = dataclasses.replace(
                            state, learning_rate=lr, l2_lambda=lam, latent_width=latent
                        )
                        # Continue next round from the seed that probed well.
                        next_seed = probe_seed
        model = None
        sweep = None
        scores = None
        tau = None

    final_decision = dataclasses.replace(sweep, threshold=tau)
    return model, final_decision, audit


def write_audit_log(entries: Sequence[dict], path) -> None:
    """Line-delimited JSON, one entry per round."""
    with open(path, "w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(json.dumps(entry, sort_keys=True))
            handle.write("\n")
