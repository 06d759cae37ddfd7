"""End-to-end command-line workflows on small synthetic files."""

import csv
import json

import pytest

from fuelwatch.cli import main

COMMON = ["--epochs", "25", "--learning-rate", "0.1", "--seed", "3"]


def run(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def labeled_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "labeled.csv"
    assert run("generate", "--n", "400", "--rate", "0.35", "--seed", "11",
               "--out", str(path)) == 0
    return path


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory, labeled_csv):
    outdir = tmp_path_factory.mktemp("model")
    code = run("train", "--input", str(labeled_csv), "--outdir", str(outdir),
               "--no-figures", *COMMON)
    assert code == 0
    return outdir


class TestGenerate:
    def test_exact_label_counts(self, labeled_csv):
        with open(labeled_csv) as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 400
        assert sum(int(r["label"]) for r in rows) == 140

    def test_byte_identical_rerun(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert run("generate", "--n", "50", "--rate", "0.2", "--seed", "5",
                       "--out", str(out)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_records_is_usage_error(self, tmp_path):
        code = run("generate", "--n", "0", "--out", str(tmp_path / "x.csv"))
        assert code == 1

    def test_bad_rate_is_usage_error(self, tmp_path):
        code = run("generate", "--n", "10", "--rate", "1.4",
                   "--out", str(tmp_path / "x.csv"))
        assert code == 1


class TestTrain:
    def test_artifacts_written(self, artifacts):
        assert (artifacts / "model.json").exists()
        assert (artifacts / "scaler.json").exists()
        trace = list(csv.reader(open(artifacts / "loss_trace.csv")))
        assert trace[0] == ["epoch", "train_loss", "val_loss"]
        assert len(trace) == 26

    def test_missing_input_is_data_error(self, tmp_path):
        code = run("train", "--input", str(tmp_path / "absent.csv"),
                   "--outdir", str(tmp_path), "--no-figures")
        assert code == 2

    def test_zero_epochs_equals_initialization(self, tmp_path, labeled_csv):
        """The serialized epochs-0 model must byte-match a fresh init."""
        from fuelwatch import neuralnet

        outdir = tmp_path / "zero"
        assert run("train", "--input", str(labeled_csv), "--outdir", str(outdir),
                   "--epochs", "0", "--seed", "3", "--no-figures") == 0
        expected = tmp_path / "init.json"
        neuralnet.save_model(
            neuralnet.init_model(neuralnet.default_layer_plan(16), seed=3),
            expected,
            scaler_ref="scaler.json",
            train_config=neuralnet.TrainConfig(epochs=0, seed=3),
        )
        assert (outdir / "model.json").read_bytes() == expected.read_bytes()

    def test_figures_rendered_by_default(self, tmp_path, labeled_csv):
        outdir = tmp_path / "fig"
        assert run("train", "--input", str(labeled_csv), "--outdir", str(outdir),
                   "--epochs", "2", "--seed", "3") == 0
        assert (outdir / "loss_curve.png").exists()

    def test_incomplete_rows_reported_as_rejections_csv(self, tmp_path, labeled_csv):
        damaged = tmp_path / "damaged.csv"
        lines = labeled_csv.read_text().splitlines()
        header = lines[0].split(",")
        row = lines[2].split(",")
        row[header.index("CONSUMPTION_HIS")] = ""
        lines[2] = ",".join(row)
        damaged.write_text("\n".join(lines) + "\n")
        outdir = tmp_path / "out"
        assert run("train", "--input", str(damaged), "--outdir", str(outdir),
                   "--epochs", "1", "--seed", "3", "--no-figures") == 0
        rows = list(csv.reader(open(outdir / "rejections.csv")))
        assert rows[0] == ["row", "reason"]
        assert rows[1][0] == "2"
        assert "CONSUMPTION_HIS" in rows[1][1]


class TestDetect:
    def test_results_and_summary(self, tmp_path, labeled_csv, artifacts, capsys):
        out = tmp_path / "results.csv"
        code = run("detect", "--model", str(artifacts / "model.json"),
                   "--scaler", str(artifacts / "scaler.json"),
                   "--input", str(labeled_csv), "--tau", "0.232",
                   "--out", str(out), "--no-figures")
        assert code == 0
        printed = capsys.readouterr().out
        assert "0.464" in printed and "0.928" in printed and "1.856" in printed
        rows = list(csv.reader(open(out)))
        assert rows[0] == ["record", "score", "verdict", "severity"]
        n_anom = sum(1 for r in rows[1:] if r[2] == "anomaly")
        assert f"{n_anom} anomalous" in printed

    def test_empty_input_gives_header_only(self, tmp_path, artifacts, labeled_csv):
        empty = tmp_path / "empty.csv"
        with open(labeled_csv) as src:
            header = src.readline()
        empty.write_text(header)
        out = tmp_path / "results.csv"
        code = run("detect", "--model", str(artifacts / "model.json"),
                   "--scaler", str(artifacts / "scaler.json"),
                   "--input", str(empty), "--tau", "0.2",
                   "--out", str(out), "--no-figures")
        assert code == 0
        assert out.read_text().strip() == "record,score,verdict,severity"

    def test_missing_tau_is_usage_error(self, tmp_path, artifacts, labeled_csv):
        code = run("detect", "--model", str(artifacts / "model.json"),
                   "--scaler", str(artifacts / "scaler.json"),
                   "--input", str(labeled_csv),
                   "--out", str(tmp_path / "r.csv"), "--no-figures")
        assert code == 1


class TestAssist:
    def test_full_loop_artifacts(self, tmp_path, labeled_csv):
        outdir = tmp_path / "assist"
        code = run("assist", "--input", str(labeled_csv), "--outdir", str(outdir),
                   "--min-accuracy", "0.75", "--min-recall", "0.75",
                   "--no-figures", *COMMON)
        assert code == 0
        for name in ("model.json", "scaler.json", "audit.jsonl",
                     "sweep.csv", "threshold.json", "metrics.json"):
            assert (outdir / name).exists(), name
        metrics = json.loads((outdir / "metrics.json").read_text())
        assert set(metrics) == {"accuracy", "precision", "recall", "fpr",
                                "specificity", "f1"}
        audit = [json.loads(line) for line in
                 (outdir / "audit.jsonl").read_text().splitlines()]
        assert audit[-1]["action"] == "stop"

    def test_trivial_targets_single_round(self, tmp_path, labeled_csv):
        outdir = tmp_path / "quick"
        code = run("assist", "--input", str(labeled_csv), "--outdir", str(outdir),
                   "--min-accuracy", "0", "--min-recall", "0",
                   "--no-figures", *COMMON)
        assert code == 0
        lines = (outdir / "audit.jsonl").read_text().splitlines()
        assert len(lines) == 1

    def test_rerun_reproduces_audit_bytes(self, tmp_path, labeled_csv):
        logs = []
        for name in ("r1", "r2"):
            outdir = tmp_path / name
            assert run("assist", "--input", str(labeled_csv),
                       "--outdir", str(outdir),
                       "--min-accuracy", "0.7", "--min-recall", "0.7",
                       "--no-figures", *COMMON) == 0
            logs.append((outdir / "audit.jsonl").read_bytes())
        assert logs[0] == logs[1]


class TestAnalyze:
    def test_emits_importance_and_correlation(self, tmp_path, labeled_csv):
        outdir = tmp_path / "analysis"
        code = run("analyze", "--input", str(labeled_csv), "--outdir", str(outdir),
                   "--trees", "15", "--seed", "2", "--no-figures")
        assert code == 0
        rows = list(csv.reader(open(outdir / "importance.csv")))
        values = [float(r[1]) for r in rows[1:]]
        assert max(values) == 100.0
        corr_rows = list(csv.reader(open(outdir / "correlation.csv")))
        names = corr_rows[0][1:]
        matrix = [[float(v) for v in row[1:]] for row in corr_rows[1:]]
        for i in range(len(names)):
            for j in range(len(names)):
                assert matrix[i][j] == matrix[j][i]
        assert not (outdir / "sweep.csv").exists()

    def test_sweep_emitted_with_model(self, tmp_path, labeled_csv, artifacts):
        outdir = tmp_path / "analysis2"
        code = run("analyze", "--input", str(labeled_csv), "--outdir", str(outdir),
                   "--trees", "5", "--model", str(artifacts / "model.json"),
                   "--scaler", str(artifacts / "scaler.json"), "--no-figures")
        assert code == 0
        rows = list(csv.reader(open(outdir / "sweep.csv")))
        assert rows[0] == ["threshold", "accuracy", "tpr"]
        assert len(rows) > 100

    def test_rule_r2_data_ranks_running_time_per_day_first(self, tmp_path):
        """Labels produced solely by the R2 rule must rank its feature first."""
        data = tmp_path / "r2.csv"
        assert run("generate", "--n", "500", "--rate", "0.4", "--seed", "29",
                   "--out", str(data)) == 0
        # Rewrite labels to depend on running_time_per_day alone.
        with open(data) as handle:
            rows = list(csv.DictReader(handle))
        fields = list(rows[0])
        for row in rows:
            row["label"] = "1" if float(row["running_time_per_day"]) > 24.0 else "0"
            row["triggered_rules"] = "R2" if row["label"] == "1" else ""
        with open(data, "w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)
        outdir = tmp_path / "out"
        assert run("analyze", "--input", str(data), "--outdir", str(outdir),
                   "--trees", "20", "--seed", "1", "--no-figures") == 0
        top = list(csv.reader(open(outdir / "importance.csv")))[1]
        assert top[0] == "running_time_per_day"

    def test_figures_rendered(self, tmp_path, labeled_csv):
        outdir = tmp_path / "figs"
        assert run("analyze", "--input", str(labeled_csv), "--outdir", str(outdir),
                   "--trees", "5") == 0
        assert (outdir / "importance.png").exists()
        assert (outdir / "correlation.png").exists()


class TestEvaluate:
    def test_metrics_json(self, tmp_path, labeled_csv, artifacts):
        out = tmp_path / "metrics.json"
        code = run("evaluate", "--model", str(artifacts / "model.json"),
                   "--scaler", str(artifacts / "scaler.json"),
                   "--input", str(labeled_csv), "--tau", "0.3",
                   "--out", str(out))
        assert code == 0
        parsed = json.loads(out.read_text())
        assert 0.0 <= parsed["accuracy"] <= 1.0


class TestConfigFile:
    def test_config_supplies_defaults_flags_override(self, tmp_path):
        config = tmp_path / "run.ini"
        config.write_text("[generate]\nn = 30\nrate = 0.2\nseed = 4\n")
        out1 = tmp_path / "a.csv"
        assert run("--config", str(config), "generate", "--out", str(out1)) == 0
        with open(out1) as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 30
        assert sum(int(r["label"]) for r in rows) == 6
        out2 = tmp_path / "b.csv"
        assert run("--config", str(config), "generate", "--n", "10",
                   "--out", str(out2)) == 0
        with open(out2) as handle:
            assert len(list(csv.DictReader(handle))) == 10

    def test_missing_config_is_data_error(self, tmp_path):
        assert run("--config", str(tmp_path / "no.ini"), "generate",
                   "--out", str(tmp_path / "x.csv")) == 2

    def test_unknown_flag_is_usage_error(self):
        assert run("generate", "--bogus") == 1
