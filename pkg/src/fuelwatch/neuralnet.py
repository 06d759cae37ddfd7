"""Dense autoencoder trained with plain mini-batch gradient descent.

Everything here is written against numpy only: forward pass, the
mean-absolute-error objective with an L2 weight penalty, backpropagation,
and a central-finite-difference gradient checker.  Matrices follow the
features-by-observations convention used in the rest of the package.

The L2 penalty covers weights only, never biases, and the subgradient of
|x| at 0 is taken as 0, which keeps training fully deterministic for a
fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .dataset import FeatureMatrix
from .errors import DataError, NumericError, UsageError

ACTIVATIONS = ("relu", "sigmoid", "linear")

MODEL_FORMAT_TAG = "fuelwatch-model/1"


@dataclass(frozen=True)
class LayerSpec:
    input_width: int
    output_width: int
    activation: str

    def __post_init__(self) -> None:
        if self.input_width < 1 or self.output_width < 1:
            raise UsageError("layer widths must be at least 1")
        if self.activation not in ACTIVATIONS:
            raise UsageError(f"unknown activation {self.activation!r}")


@dataclass
class Layer:
    spec: LayerSpec
    weights: np.ndarray  # shape (output_width, input_width)
    bias: np.ndarray  # shape (output_width,)

    def copy(self) -> "Layer":
        return Layer(self.spec, self.weights.copy(), self.bias.copy())


@dataclass
class AutoencoderModel:
    encoder_layers: list
    decoder_layers: list

    @property
    def layers(self) -> list:
        return self.encoder_layers + self.decoder_layers

    @property
    def input_width(self) -> int:
        return self.encoder_layers[0].spec.input_width

    @property
    def latent_width(self) -> int:
        return self.encoder_layers[-1].spec.output_width

    def copy(self) -> "AutoencoderModel":
        return AutoencoderModel(
            [layer.copy() for layer in self.encoder_layers],
            [layer.copy() for layer in self.decoder_layers],
        )

    def weight_square_sum(self) -> float:
        return float(sum(np.sum(layer.weights**2) for layer in self.layers))


@dataclass(frozen=True)
class TrainConfig:
    l2_lambda: float = 1e-4
    learning_rate: float = 0.01
    epochs: int = 500
    batch_size: int = 32
    seed: int = 0
    init_scheme: str = "glorot-uniform"

    def __post_init__(self) -> None:
        if self.l2_lambda < 0:
            raise UsageError("l2_lambda must be nonnegative")
        if self.learning_rate <= 0:
            raise UsageError("learning_rate must be positive")
        if self.epochs < 0:
            raise UsageError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise UsageError("batch_size must be at least 1")
        if self.init_scheme != "glorot-uniform":
            raise UsageError(f"unknown init scheme {self.init_scheme!r}")


@dataclass
class TrainTrace:
    train_loss: list = field(default_factory=list)
    validation_loss: list = field(default_factory=list)


def default_layer_plan(
    n_features: int, hidden_width: int = 8, latent_width: int = 4
) -> list[LayerSpec]:
    """Symmetric N -> hidden -> latent -> hidden -> N stack, relu inside,
    sigmoid on the output to match inputs scaled to [0, 1]."""
    return [
        LayerSpec(n_features, hidden_width, "relu"),
        LayerSpec(hidden_width, latent_width, "relu"),
        LayerSpec(latent_width, hidden_width, "relu"),
        LayerSpec(hidden_width, n_features, "sigmoid"),
    ]


def _validate_plan(layer_plan: Sequence[LayerSpec]) -> int:
    """Check width chaining; returns the index of the first bottleneck layer."""
    if len(layer_plan) < 2:
        raise UsageError("layer plan needs at least an encoder and a decoder layer")
    for before, after in zip(layer_plan, layer_plan[1:]):
        if before.output_width != after.input_width:
            raise UsageError(
                f"layer widths do not chain: {before.output_width} -> {after.input_width}"
            )
    n_features = layer_plan[0].input_width
    if layer_plan[-1].output_width != n_features:
        raise UsageError("decoder must end at the encoder's input width")
    widths = [spec.output_width for spec in layer_plan]
    bottleneck = int(np.argmin(widths))
    if widths[bottleneck] >= n_features:
        raise UsageError("latent width must be smaller than the input width")
    return bottleneck


def init_model(layer_plan: Sequence[LayerSpec], seed: int) -> AutoencoderModel:
    """Glorot-uniform weights, zero biases, drawn from a seeded generator.

    The encoder/decoder boundary sits after the narrowest layer of the
    plan (the bottleneck).
    """
    bottleneck = _validate_plan(layer_plan)
    rng = np.random.default_rng(seed)
    layers = []
    for spec in layer_plan:
        limit = np.sqrt(6.0 / (spec.input_width + spec.output_width))
        weights = rng.uniform(-limit, limit, size=(spec.output_width, spec.input_width))
        layers.append(Layer(spec, weights, np.zeros(spec.output_width)))
    return AutoencoderModel(layers[: bottleneck + 1], layers[bottleneck + 1 :])


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    return z


def _activate_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(float)
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


def _forward(layers: Sequence[Layer], a: np.ndarray) -> np.ndarray:
    for layer in layers:
        a = _activate(layer.spec.activation, layer.weights @ a + layer.bias[:, None])
    return a


def _as_columns(x: np.ndarray, width: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[:, None]
    if x.shape[0] != width:
        raise DataError(f"{what} has {x.shape[0]} entries, expected {width}")
    return x, single


def encode(model: AutoencoderModel, x: np.ndarray) -> np.ndarray:
    """Map observations (vector or feature-by-observation matrix) to latents."""
    cols, single = _as_columns(x, model.input_width, "observation")
    h = _forward(model.encoder_layers, cols)
    return h[:, 0] if single else h


def decode(model: AutoencoderModel, h: np.ndarray) -> np.ndarray:
    """Map latent vectors back to reconstructions."""
    cols, single = _as_columns(h, model.latent_width, "latent vector")
    out = _forward(model.decoder_layers, cols)
    return out[:, 0] if single else out


def reconstruct(model: AutoencoderModel, x: np.ndarray) -> np.ndarray:
    return decode(model, encode(model, x))


def mae_loss(x: np.ndarray, x_hat: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-feature absolute errors and their mean for one observation."""
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x.shape != x_hat.shape:
        raise DataError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    per_feature = np.abs(x - x_hat)
    return per_feature, float(per_feature.mean())


def _batch_values(batch: Union[FeatureMatrix, np.ndarray]) -> np.ndarray:
    values = batch.values if isinstance(batch, FeatureMatrix) else np.asarray(batch, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return values


def batch_mae(model: AutoencoderModel, batch: Union[FeatureMatrix, np.ndarray]) -> float:
    """Mean over observations of the per-observation mean absolute error."""
    values = _batch_values(batch)
    if values.shape[1] == 0:
        raise DataError("empty batch")
    return float(np.mean(np.abs(values - reconstruct(model, values))))


def objective(
    model: AutoencoderModel,
    batch: Union[FeatureMatrix, np.ndarray],
    l2_lambda: float,
) -> float:
    """Batch-mean MAE plus ``l2_lambda`` times the sum of squared weights."""
    return batch_mae(model, batch) + l2_lambda * model.weight_square_sum()


def _backprop(
    model: AutoencoderModel, x: np.ndarray, l2_lambda: float
) -> tuple[list, list, float]:
    """Gradients of the objective for one batch of column observations.

    Returns (weight gradients, bias gradients, batch MAE).
    """
    layers = model.layers
    activations = [x]
    pre_acts = []
    a = x
    for layer in layers:
        z = layer.weights @ a + layer.bias[:, None]
        a = _activate(layer.spec.activation, z)
        pre_acts.append(z)
        activations.append(a)

    n_features, batch_size = x.shape
    residual = x - a
    loss = float(np.mean(np.abs(residual)))
    # Subgradient of |.| at 0 is 0 by np.sign.
    delta_a = -np.sign(residual) / (n_features * batch_size)

    grads_w = [None] * len(layers)
    grads_b = [None] * len(layers)
    for idx in range(len(layers) - 1, -1, -1):
        layer = layers[idx]
        delta = delta_a * _activate_grad(
            layer.spec.activation, pre_acts[idx], activations[idx + 1]
        )
        grads_w[idx] = delta @ activations[idx].T + 2.0 * l2_lambda * layer.weights
        grads_b[idx] = delta.sum(axis=1)
        if idx > 0:
            delta_a = layer.weights.T @ delta
    return grads_w, grads_b, loss


def train(
    model: AutoencoderModel,
    normal_train: Union[FeatureMatrix, np.ndarray],
    validation: Union[FeatureMatrix, np.ndarray],
    cfg: TrainConfig,
) -> tuple[AutoencoderModel, TrainTrace]:
    """Mini-batch gradient descent on the regularized MAE objective.

    The input model is left untouched; a trained copy is returned along
    with per-epoch training and validation MAE.  Shuffling is seeded per
    config, so identical inputs give identical outputs.
    """
    model = model.copy()
    trace = TrainTrace()
    train_values = _batch_values(normal_train)
    val_values = _batch_values(validation)
    if train_values.shape[1] == 0:
        raise DataError("training set is empty")
    rng = np.random.default_rng(cfg.seed)
    layers = model.layers
    m = train_values.shape[1]
    for epoch in range(cfg.epochs):
        order = rng.permutation(m)
        for batch_index, start in enumerate(range(0, m, cfg.batch_size)):
            batch = train_values[:, order[start : start + cfg.batch_size]]
            grads_w, grads_b, loss = _backprop(model, batch, cfg.l2_lambda)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}"
                )
            for layer, gw, gb in zip(layers, grads_w, grads_b):
                layer.weights -= cfg.learning_rate * gw
                layer.bias -= cfg.learning_rate * gb
        trace.train_loss.append(batch_mae(model, train_values))
        if val_values.shape[1] > 0:
            trace.validation_loss.append(batch_mae(model, val_values))
        else:
            trace.validation_loss.append(float("nan"))
    return model, trace


def kink_margins(model: AutoencoderModel, x: np.ndarray) -> tuple[float, float]:
    """Distance of an observation from the nondifferentiable points.

    Returns (smallest |x_i - x_hat_i|, smallest |relu pre-activation|);
    the second is +inf when the model has no relu layers.
    """
    cols, _ = _as_columns(x, model.input_width, "observation")
    a = cols
    relu_margin = np.inf
    for layer in model.layers:
        z = layer.weights @ a + layer.bias[:, None]
        if layer.spec.activation == "relu":
            relu_margin = min(relu_margin, float(np.min(np.abs(z))))
        a = _activate(layer.spec.activation, z)
    mae_margin = float(np.min(np.abs(cols - a)))
    return mae_margin, relu_margin


def gradient_check(
    model: AutoencoderModel,
    x: np.ndarray,
    l2_lambda: float,
    epsilon: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The observation must sit away from the MAE kinks: every per-feature
    reconstruction error has to exceed 10 * epsilon, otherwise the
    two-sided perturbation may cross a nondifferentiable point.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise UsageError("epsilon must lie in [1e-7, 1e-3]")
    cols, _ = _as_columns(x, model.input_width, "observation")
    mae_margin, _ = kink_margins(model, cols)
    if mae_margin <= 10.0 * epsilon:
        raise UsageError(
            f"observation too close to an MAE kink (margin {mae_margin:.2e}); "
            "pick a different evaluation point"
        )

    grads_w, grads_b, _ = _backprop(model, cols, l2_lambda)
    worst = 0.0
    for layer, gw, gb in zip(model.layers, grads_w, grads_b):
        for param, grad in ((layer.weights, gw), (layer.bias, gb)):
            flat = param.ravel()
            analytic = grad.ravel()
            for k in range(flat.size):
                original = flat[k]
                flat[k] = original + epsilon
                up = objective(model, cols, l2_lambda)
                flat[k] = original - epsilon
                down = objective(model, cols, l2_lambda)
                flat[k] = original
                numeric = (up - down) / (2.0 * epsilon)
                scale = max(abs(analytic[k]), abs(numeric), 1e-6)
                worst = max(worst, abs(analytic[k] - numeric) / scale)
    return worst


def save_model(
    model: AutoencoderModel,
    path,
    scaler_ref: Optional[str] = None,
    train_config: Optional[TrainConfig] = None,
) -> None:
    """Serialize the model as versioned JSON with row-major weight arrays."""
    def layer_payload(layer: Layer, role: str) -> dict:
        return {
            "role": role,
            "input_width": layer.spec.input_width,
            "output_width": layer.spec.output_width,
            "activation": layer.spec.activation,
            "weights": layer.weights.tolist(),
            "bias": layer.bias.tolist(),
        }

    payload = {
        "format": MODEL_FORMAT_TAG,
        "layers": [layer_payload(l, "encoder") for l in model.encoder_layers]
        + [layer_payload(l, "decoder") for l in model.decoder_layers],
        "latent_width": model.latent_width,
        "scaler": scaler_ref,
        "train_config": None
        if train_config is None
        else {
            "l2_lambda": train_config.l2_lambda,
            "learning_rate": train_config.learning_rate,
            "epochs": train_config.epochs,
            "batch_size": train_config.batch_size,
            "seed": train_config.seed,
            "init_scheme": train_config.init_scheme,
        },
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def load_model(path) -> AutoencoderModel:
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("format") != MODEL_FORMAT_TAG:
        raise DataError(f"unsupported model format: {payload.get('format')!r}")
    encoder, decoder = [], []
    for entry in payload["layers"]:
        layer = Layer(
            spec=LayerSpec(entry["input_width"], entry["output_width"], entry["activation"]),
            weights=np.array(entry["weights"], dtype=float),
            bias=np.array(entry["bias"], dtype=float),
        )
        (encoder if entry["role"] == "encoder" else decoder).append(layer)
    if not encoder or not decoder:
        raise DataError("model file lacks encoder or decoder layers")
    return AutoencoderModel(encoder, decoder)
