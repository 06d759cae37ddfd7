"""Anomaly detection for power-generator fuel-consumption telemetry.

The pipeline: rule-labeled telemetry records (real or synthetic) are
min-max scaled, an autoencoder learns to reconstruct the normal ones,
reconstruction error becomes the anomaly score, and a label-assistance
loop calibrates the detection threshold against metric targets.
"""

from .analysis import correlation_matrix, feature_importance
from .assist import (
    AssistAction,
    AssistData,
    AssistTargets,
    SearchSpace,
    assess,
    decide,
    run_assist_loop,
)
from .dataset import (
    FeatureMatrix,
    GeneratorProfile,
    LabeledRecord,
    RawRecord,
    engineer_features,
    generate_synthetic,
    label_record,
    parse_csv,
    to_feature_matrix,
)
from .detector import (
    ReconstructionReport,
    SeverityClass,
    ThresholdDecision,
    classify,
    default_grid,
    score,
    severity,
    severity_bounds,
    sweep_threshold,
)
from .errors import DataError, FuelwatchError, NumericError, UsageError
from .metrics import ConfusionCounts, MetricSet, compute_metrics, confusion
from .neuralnet import (
    AutoencoderModel,
    LayerSpec,
    TrainConfig,
    TrainTrace,
    decode,
    default_layer_plan,
    encode,
    gradient_check,
    init_model,
    mae_loss,
    objective,
    train,
)
from .preprocess import (
    ScalerParams,
    SplitSpec,
    fit_scaler,
    inverse_transform,
    split,
    strip_anomalies,
    transform,
)

__version__ = "0.1.0"
