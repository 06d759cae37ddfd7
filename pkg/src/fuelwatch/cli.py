"""Command-line entry point.

Subcommands cover the whole pipeline: ``generate`` synthetic telemetry,
``train`` an autoencoder on the normal records, ``detect`` anomalies at a
fixed threshold, ``assist`` (train plus assisted threshold calibration
plus a one-shot test evaluation), ``analyze`` feature importance and
correlations, and ``evaluate`` a model against labeled data.

Every command is reproducible: the same flags and seed produce the same
output bytes.  Options may also be set in an INI-style config file
(section per subcommand, ``key = value`` with dashes replaced by
underscores); explicit flags win over the file.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis, assist, dataset, detector, metrics, neuralnet, plots, preprocess
from .errors import DataError, NumericError, UsageError

_GENERATE_DEFAULTS = {"n": 6000, "rate": 0.351, "seed": 7}
_SPLIT_DEFAULTS = {"train_fraction": 0.75, "validation_fraction": 0.10}
_TRAIN_DEFAULTS = {
    "epochs": 500,
    "learning_rate": 0.01,
    "l2_lambda": 1e-4,
    "batch_size": 32,
    "hidden_width": 8,
    "latent_width": 4,
}
_ASSIST_DEFAULTS = {
    "min_accuracy": 0.90,
    "min_recall": 0.90,
    "max_rounds": 3,
    "lr_range": "0.005,0.05",
    "lambda_range": "1e-5,1e-3",
    "latent_widths": "4,8,12",
}


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the exit-code scheme."""

    def error(self, message):
        raise UsageError(message)


class _Config:
    """Optional INI config; one section per subcommand."""

    def __init__(self, path: Optional[str]):
        self._parser = configparser.ConfigParser()
        if path is not None:
            if not Path(path).exists():
                raise DataError(f"config file not found: {path}")
            self._parser.read(path)

    def get(self, section: str, key: str):
        if self._parser.has_option(section, key):
            return self._parser.get(section, key)
        return None


def _resolve(args_value, config: _Config, section: str, key: str, default, cast):
    """Flag > config file > built-in default."""
    if args_value is not None:
        return args_value
    raw = config.get(section, key)
    if raw is not None:
        try:
            return cast(raw)
        except ValueError as exc:
            raise UsageError(f"bad config value for {section}.{key}: {raw!r}") from exc
    return default


def _float_pair(text: str) -> tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise UsageError(f"expected 'lo,hi', got {text!r}")
    return float(parts[0]), float(parts[1])


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(p.strip()) for p in text.split(",") if p.strip())


def _profiles_from(capacities: str, litres_per_kva_hour: float) -> list:
    caps = [float(p.strip()) for p in capacities.split(",") if p.strip()]
    if not caps:
        raise UsageError("no generator capacities given")
    return [
        dataset.GeneratorProfile(c, litres_per_kva_hour * c) for c in caps
    ]


@dataclass
class RunConfig:
    """Resolved settings shared by the train-like commands."""

    seed: int
    split: preprocess.SplitSpec
    train_cfg: neuralnet.TrainConfig
    hidden_width: int
    latent_width: int
    score_mode: str
    features: Optional[list]
    targets: assist.AssistTargets
    space: assist.SearchSpace
    figures: bool


def _run_config(args, config: _Config, section: str) -> RunConfig:
    seed = _resolve(args.seed, config, section, "seed", 0, int)
    split = preprocess.SplitSpec(
        train_fraction=_resolve(
            args.train_fraction, config, section, "train_fraction",
            _SPLIT_DEFAULTS["train_fraction"], float,
        ),
        validation_fraction_of_train=_resolve(
            args.val_fraction, config, section, "val_fraction",
            _SPLIT_DEFAULTS["validation_fraction"], float,
        ),
        seed=seed,
    )
    train_cfg = neuralnet.TrainConfig(
        l2_lambda=_resolve(args.l2_lambda, config, section, "l2_lambda",
                           _TRAIN_DEFAULTS["l2_lambda"], float),
        learning_rate=_resolve(args.learning_rate, config, section, "learning_rate",
                               _TRAIN_DEFAULTS["learning_rate"], float),
        epochs=_resolve(args.epochs, config, section, "epochs",
                        _TRAIN_DEFAULTS["epochs"], int),
        batch_size=_resolve(args.batch_size, config, section, "batch_size",
                            _TRAIN_DEFAULTS["batch_size"], int),
        seed=seed,
    )
    features = _resolve(args.features, config, section, "features", None, str)
    targets = assist.AssistTargets(
        min_accuracy=_resolve(getattr(args, "min_accuracy", None), config, section,
                              "min_accuracy", _ASSIST_DEFAULTS["min_accuracy"], float),
        min_recall=_resolve(getattr(args, "min_recall", None), config, section,
                            "min_recall", _ASSIST_DEFAULTS["min_recall"], float),
        max_rounds=_resolve(getattr(args, "max_rounds", None), config, section,
                            "max_rounds", _ASSIST_DEFAULTS["max_rounds"], int),
    )
    space = assist.SearchSpace(
        learning_rate=_float_pair(
            _resolve(getattr(args, "lr_range", None), config, section, "lr_range",
                     _ASSIST_DEFAULTS["lr_range"], str)
        ),
        l2_lambda=_float_pair(
            _resolve(getattr(args, "lambda_range", None), config, section, "lambda_range",
                     _ASSIST_DEFAULTS["lambda_range"], str)
        ),
        latent_widths=_int_list(
            _resolve(getattr(args, "latent_widths", None), config, section, "latent_widths",
                     _ASSIST_DEFAULTS["latent_widths"], str)
        ),
        epochs=(train_cfg.epochs,),
    )
    return RunConfig(
        seed=seed,
        split=split,
        train_cfg=train_cfg,
        hidden_width=_resolve(args.hidden_width, config, section, "hidden_width",
                              _TRAIN_DEFAULTS["hidden_width"], int),
        latent_width=_resolve(args.latent_width, config, section, "latent_width",
                              _TRAIN_DEFAULTS["latent_width"], int),
        score_mode=_resolve(args.score_mode, config, section, "score_mode",
                            "priority-feature", str),
        features=None if features is None else [f.strip() for f in features.split(",")],
        targets=targets,
        space=space,
        figures=not args.no_figures,
    )


def _read_records(path, outdir: Optional[Path] = None):
    """Read labeled records; rejected rows land in <outdir>/rejections.csv."""
    records, rejections = dataset.read_labeled_csv(path)
    if rejections:
        print(f"dropped {len(rejections)} incomplete row(s)", file=sys.stderr)
        if outdir is not None:
            dataset.write_rejections_csv(rejections, outdir / "rejections.csv")
    if not records:
        raise DataError(f"no usable records in {path}")
    return records


def _load_splits(path, run: RunConfig, outdir: Optional[Path] = None):
    """Read labeled records and split them for training."""
    records = _read_records(path, outdir)
    train_recs, val_recs, test_recs = preprocess.split(records, run.split)
    return train_recs, val_recs, test_recs


def _matrices(records, features):
    return dataset.to_feature_matrix(records, features)


def _write_loss_csv(trace: neuralnet.TrainTrace, path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, (tl, vl) in enumerate(
            zip(trace.train_loss, trace.validation_loss), start=1
        ):
            writer.writerow([epoch, repr(tl), repr(vl)])


# ----------------------------------------------------------------------
# subcommands


def cmd_generate(args, config: _Config) -> int:
    n = _resolve(args.n, config, "generate", "n", _GENERATE_DEFAULTS["n"], int)
    rate = _resolve(args.rate, config, "generate", "rate", _GENERATE_DEFAULTS["rate"], float)
    seed = _resolve(args.seed, config, "generate", "seed", _GENERATE_DEFAULTS["seed"], int)
    capacities = _resolve(args.capacities, config, "generate", "capacities",
                          ",".join(str(c) for c in dataset.DEFAULT_PROFILE_CAPACITIES), str)
    lpkh = _resolve(args.litres_per_kva_hour, config, "generate", "litres_per_kva_hour",
                    dataset.DEFAULT_LITRES_PER_KVA_HOUR, float)
    profiles = _profiles_from(capacities, lpkh)
    records = dataset.generate_synthetic(n, rate, seed, profiles)
    dataset.write_labeled_csv(records, args.out)
    anomalies = sum(r.label for r in records)
    print(f"wrote {len(records)} records to {args.out}")
    print(f"labels: {len(records) - anomalies} normal, {anomalies} anomalous")
    return 0


def cmd_train(args, config: _Config) -> int:
    run = _run_config(args, config, "train")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    train_recs, val_recs, _ = _load_splits(args.input, run, outdir)
    normal_train, removed = preprocess.strip_anomalies(train_recs)
    print(f"training on {len(normal_train)} normal records "
          f"({removed} anomalous removed, {len(val_recs)} validation)")
    train_fm, _ = _matrices(normal_train, run.features)
    val_normal = [r for r in val_recs if r.label == 0]
    val_fm, _ = _matrices(val_normal, run.features)

    scaler = preprocess.fit_scaler(train_fm)
    plan = neuralnet.default_layer_plan(train_fm.n_features, run.hidden_width, run.latent_width)
    model = neuralnet.init_model(plan, run.seed)
    model, trace = neuralnet.train(
        model,
        preprocess.transform(train_fm, scaler),
        preprocess.transform(val_fm, scaler),
        run.train_cfg,
    )

    scaler_path = outdir / "scaler.json"
    scaler_path.write_text(scaler.to_json() + "\n", encoding="utf-8")
    neuralnet.save_model(model, outdir / "model.json",
                         scaler_ref=scaler_path.name, train_config=run.train_cfg)
    _write_loss_csv(trace, outdir / "loss_trace.csv")
    if run.figures and trace.train_loss:
        plots.plot_loss_curves(trace, outdir / "loss_curve.png")
    if trace.train_loss:
        print(f"final training MAE {trace.train_loss[-1]:.6f}, "
              f"validation MAE {trace.validation_loss[-1]:.6f}")
    else:
        print("epochs = 0; model saved at initialization")
    print(f"artifacts written to {outdir}")
    return 0


def _load_model_and_scaler(model_path, scaler_path):
    model = neuralnet.load_model(model_path)
    scaler_file = Path(scaler_path)
    if not scaler_file.exists():
        raise DataError(f"scaler file not found: {scaler_file}")
    scaler = preprocess.ScalerParams.from_json(scaler_file.read_text(encoding="utf-8"))
    return model, scaler


def cmd_detect(args, config: _Config) -> int:
    tau = _resolve(args.tau, config, "detect", "tau", None, float)
    if tau is None or tau < 0:
        raise UsageError("a nonnegative --tau is required")
    score_mode = _resolve(args.score_mode, config, "detect", "score_mode",
                          "priority-feature", str)
    model, scaler = _load_model_and_scaler(args.model, args.scaler)
    records, _ = dataset.read_labeled_csv(args.input)
    fm, _ = dataset.to_feature_matrix(records, scaler.feature_names)
    reports = detector.score(model, scaler, fm, score_mode)
    detector.write_results_csv(reports, tau, args.out)

    n_anomalies = sum(1 for r in reports if r.score > tau)
    if tau > 0:
        bounds = detector.severity_bounds(tau)
        bound_text = " ".join(f"{k}>{v:.6g}" for k, v in bounds.items())
    else:
        bound_text = "n/a (tau = 0)"
    print(f"scored {len(reports)} records at tau={tau:.6g} [{score_mode}]")
    print(f"severity class bounds: {bound_text}")
    print(f"verdicts: {len(reports) - n_anomalies} normal, {n_anomalies} anomalous")
    if not args.no_figures and reports:
        plots.plot_score_distribution(
            [r.score for r in reports], tau if tau > 0 else None,
            Path(args.out).with_suffix(".png"),
        )
    return 0


def cmd_assist(args, config: _Config) -> int:
    run = _run_config(args, config, "assist")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    train_recs, val_recs, test_recs = _load_splits(args.input, run, outdir)
    train_fm, train_labels = _matrices(train_recs, run.features)
    val_fm, val_labels = _matrices(val_recs, run.features)
    data = assist.AssistData(train_fm, train_labels, val_fm, val_labels)

    model, decision, audit = assist.run_assist_loop(
        data, run.train_cfg, run.space, run.targets,
        hidden_width=run.hidden_width, latent_width=run.latent_width,
        score_mode=run.score_mode,
    )
    assist.write_audit_log(audit, outdir / "audit.jsonl")

    # Refit the scaler exactly as the loop did, for the saved artifacts.
    normal_mask = train_labels == 0
    normal_fm = dataset.FeatureMatrix(
        values=train_fm.values[:, normal_mask],
        feature_names=list(train_fm.feature_names),
        priority_feature=train_fm.priority_feature,
    )
    scaler = preprocess.fit_scaler(normal_fm)
    scaler_path = outdir / "scaler.json"
    scaler_path.write_text(scaler.to_json() + "\n", encoding="utf-8")
    neuralnet.save_model(model, outdir / "model.json",
                         scaler_ref=scaler_path.name, train_config=run.train_cfg)
    detector.write_sweep_csv(decision, outdir / "sweep.csv")
    (outdir / "threshold.json").write_text(
        '{"selection_rule": "%s", "threshold": %r}\n'
        % (decision.selection_rule, decision.threshold),
        encoding="utf-8",
    )

    # One-shot evaluation on the held-out test split.
    test_fm, test_labels = _matrices(test_recs, run.features)
    test_reports = detector.score(model, scaler, test_fm, run.score_mode)
    preds = [1 if r.score > decision.threshold else 0 for r in test_reports]
    counts = metrics.confusion(preds, test_labels)
    mset = metrics.compute_metrics(counts)
    (outdir / "metrics.json").write_text(mset.to_json() + "\n", encoding="utf-8")

    if run.figures:
        plots.plot_sweep_curve(decision, outdir / "sweep.png")
        plots.plot_score_distribution(
            [r.score for r in test_reports],
            decision.threshold if decision.threshold > 0 else None,
            outdir / "test_scores.png",
        )

    final = audit[-1]
    print(f"assist loop finished after {len(audit)} round(s); "
          f"threshold = {decision.threshold:.6g}")
    print(f"assist-set accuracy {final['accuracy']:.4f}, recall {final['recall']:.4f}")
    print(f"test confusion: TN={counts.tn} TA={counts.ta} FN={counts.fn} FA={counts.fa}")
    print(f"test accuracy {mset.accuracy:.4f}, recall {mset.recall:.4f}; "
          f"metrics written to {outdir / 'metrics.json'}")
    return 0


def cmd_analyze(args, config: _Config) -> int:
    trees = _resolve(args.trees, config, "analyze", "trees", 100, int)
    max_depth = _resolve(args.max_depth, config, "analyze", "max_depth", 8, int)
    seed = _resolve(args.seed, config, "analyze", "seed", 0, int)
    score_mode = _resolve(args.score_mode, config, "analyze", "score_mode",
                          "priority-feature", str)
    features = _resolve(args.features, config, "analyze", "features", None, str)
    selection = None if features is None else [f.strip() for f in features.split(",")]
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    records = _read_records(args.input, outdir)
    fm, labels = dataset.to_feature_matrix(records, selection)

    report = analysis.feature_importance(fm, labels, trees=trees,
                                         max_depth=max_depth, seed=seed)
    analysis.write_importance_csv(report, outdir / "importance.csv")
    corr = analysis.correlation_matrix(fm)
    analysis.write_correlation_csv(corr, outdir / "correlation.csv")
    top = report.feature_names[report.ranking[0]]
    print(f"importance and correlation written to {outdir}; top feature: {top}")

    wrote_sweep = False
    if args.model is not None and args.scaler is not None:
        model, scaler = _load_model_and_scaler(args.model, args.scaler)
        score_fm, _ = dataset.to_feature_matrix(records, scaler.feature_names)
        reports = detector.score(model, scaler, score_fm, score_mode)
        scores = [r.score for r in reports]
        decision = detector.sweep_threshold(scores, labels, detector.default_grid(scores))
        detector.write_sweep_csv(decision, outdir / "sweep.csv")
        wrote_sweep = True
        print(f"threshold sweep written; best threshold {decision.threshold:.6g}")
        if not args.no_figures:
            plots.plot_sweep_curve(decision, outdir / "sweep.png")

    if not args.no_figures:
        plots.plot_importance(report, outdir / "importance.png")
        plots.plot_correlation(corr, outdir / "correlation.png")
    if not wrote_sweep:
        print("no model/scaler given; sweep curve skipped")
    return 0


def cmd_evaluate(args, config: _Config) -> int:
    tau = _resolve(args.tau, config, "evaluate", "tau", None, float)
    if tau is None or tau < 0:
        raise UsageError("a nonnegative --tau is required")
    score_mode = _resolve(args.score_mode, config, "evaluate", "score_mode",
                          "priority-feature", str)
    model, scaler = _load_model_and_scaler(args.model, args.scaler)
    records, _ = dataset.read_labeled_csv(args.input)
    if not records:
        raise DataError(f"no usable records in {args.input}")
    fm, labels = dataset.to_feature_matrix(records, scaler.feature_names)
    reports = detector.score(model, scaler, fm, score_mode)
    preds = [1 if r.score > tau else 0 for r in reports]
    counts = metrics.confusion(preds, labels)
    mset = metrics.compute_metrics(counts)
    if args.out is not None:
        Path(args.out).write_text(mset.to_json() + "\n", encoding="utf-8")
    print(f"confusion: TN={counts.tn} TA={counts.ta} FN={counts.fn} FA={counts.fa}")
    print(mset.to_json())
    return 0


# ----------------------------------------------------------------------
# argument wiring


def _add_run_options(sub, with_targets: bool) -> None:
    sub.add_argument("--seed", type=int, help="master seed (default 0)")
    sub.add_argument("--train-fraction", dest="train_fraction", type=float,
                     help="train share of the data (default 0.75, i.e. 3:1)")
    sub.add_argument("--val-fraction", dest="val_fraction", type=float,
                     help="validation share carved from train (default 0.10)")
    sub.add_argument("--epochs", type=int, help="training epochs (default 500)")
    sub.add_argument("--learning-rate", dest="learning_rate", type=float,
                     help="gradient-descent step size (default 0.01)")
    sub.add_argument("--l2-lambda", dest="l2_lambda", type=float,
                     help="L2 weight-penalty strength (default 1e-4)")
    sub.add_argument("--batch-size", dest="batch_size", type=int,
                     help="mini-batch size (default 32)")
    sub.add_argument("--hidden-width", dest="hidden_width", type=int,
                     help="hidden layer width (default 8)")
    sub.add_argument("--latent-width", dest="latent_width", type=int,
                     help="bottleneck width (default 4)")
    sub.add_argument("--features", help="comma-separated feature subset (default: all)")
    sub.add_argument("--score-mode", dest="score_mode",
                     choices=list(detector.SCORE_MODES),
                     help="anomaly score definition (default priority-feature)")
    sub.add_argument("--no-figures", action="store_true",
                     help="skip rendering PNG figures next to the CSV output")
    if with_targets:
        sub.add_argument("--min-accuracy", dest="min_accuracy", type=float,
                         help="accuracy target on the assist labels (default 0.90)")
        sub.add_argument("--min-recall", dest="min_recall", type=float,
                         help="recall target on the assist labels (default 0.90)")
        sub.add_argument("--max-rounds", dest="max_rounds", type=int,
                         help="assist round budget (default 3)")
        sub.add_argument("--lr-range", dest="lr_range",
                         help="learning-rate search range 'lo,hi' (default 0.005,0.05)")
        sub.add_argument("--lambda-range", dest="lambda_range",
                         help="L2 search range 'lo,hi' (default 1e-5,1e-3)")
        sub.add_argument("--latent-widths", dest="latent_widths",
                         help="candidate bottleneck widths, e.g. '3,4,6' (default 4)")


def build_parser() -> _Parser:
    parser = _Parser(prog="fuelwatch",
                     description="Fuel-consumption anomaly detection toolkit")
    parser.add_argument("--config", help="INI config file (section per subcommand)")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("generate", help="write a synthetic labeled CSV")
    gen.add_argument("--n", type=int, help="number of records (default 6000)")
    gen.add_argument("--rate", type=float, help="anomaly fraction (default 0.351)")
    gen.add_argument("--seed", type=int, help="master seed (default 7)")
    gen.add_argument("--capacities",
                     help="generator capacities in kVA, comma-separated "
                          "(default 10,20,30,45,60)")
    gen.add_argument("--litres-per-kva-hour", dest="litres_per_kva_hour", type=float,
                     help="hourly consumption cap per kVA (default 0.08)")
    gen.add_argument("--out", required=True, help="output CSV path")
    gen.set_defaults(func=cmd_generate)

    tr = commands.add_parser("train", help="train the autoencoder on normal records")
    tr.add_argument("--input", required=True, help="labeled CSV")
    tr.add_argument("--outdir", required=True, help="artifact directory")
    _add_run_options(tr, with_targets=False)
    tr.set_defaults(func=cmd_train)

    det = commands.add_parser("detect", help="score records at a fixed threshold")
    det.add_argument("--model", required=True)
    det.add_argument("--scaler", required=True)
    det.add_argument("--input", required=True, help="CSV of records to score")
    det.add_argument("--tau", type=float, help="detection threshold")
    det.add_argument("--score-mode", dest="score_mode",
                     choices=list(detector.SCORE_MODES))
    det.add_argument("--out", required=True, help="results CSV path")
    det.add_argument("--no-figures", action="store_true")
    det.set_defaults(func=cmd_detect)

    ass = commands.add_parser(
        "assist", help="assisted training: calibrate the threshold against labels"
    )
    ass.add_argument("--input", required=True, help="labeled CSV")
    ass.add_argument("--outdir", required=True, help="artifact directory")
    _add_run_options(ass, with_targets=True)
    ass.set_defaults(func=cmd_assist)

    ana = commands.add_parser("analyze",
                              help="feature importance, correlations, threshold sweep")
    ana.add_argument("--input", required=True, help="labeled CSV")
    ana.add_argument("--outdir", required=True)
    ana.add_argument("--model", help="model JSON (enables the sweep curve)")
    ana.add_argument("--scaler", help="scaler JSON (enables the sweep curve)")
    ana.add_argument("--trees", type=int, help="forest size (default 100)")
    ana.add_argument("--max-depth", dest="max_depth", type=int,
                     help="tree depth cap (default 8)")
    ana.add_argument("--seed", type=int, help="forest seed (default 0)")
    ana.add_argument("--features", help="comma-separated feature subset")
    ana.add_argument("--score-mode", dest="score_mode",
                     choices=list(detector.SCORE_MODES))
    ana.add_argument("--no-figures", action="store_true")
    ana.set_defaults(func=cmd_analyze)

    ev = commands.add_parser("evaluate", help="metrics for a model on labeled data")
    ev.add_argument("--model", required=True)
    ev.add_argument("--scaler", required=True)
    ev.add_argument("--input", required=True, help="labeled CSV")
    ev.add_argument("--tau", type=float, help="detection threshold")
    ev.add_argument("--score-mode", dest="score_mode",
                    choices=list(detector.SCORE_MODES))
    ev.add_argument("--out", help="metrics JSON path (optional)")
    ev.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _Config(args.config)
        return args.func(args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
