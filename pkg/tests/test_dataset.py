"""Record parsing, feature engineering, rule labeling and synthesis."""

import csv
from datetime import date

import numpy as np
import pytest

from fuelwatch import dataset
from fuelwatch.dataset import (
    FIELD_TO_COLUMN,
    GeneratorProfile,
    LabeledRecord,
    RawRecord,
    Rejection,
    engineer_features,
    generate_synthetic,
    label_record,
    parse_csv,
    read_labeled_csv,
    to_feature_matrix,
    write_labeled_csv,
    write_rejections_csv,
)
from fuelwatch.errors import DataError, UsageError

PROFILE = GeneratorProfile.from_capacity(20.0)  # cap: 0.08*20*24 = 38.4 L/day


def make_raw(**overrides) -> RawRecord:
    base = dict(
        cluster="CLUSTER_01",
        site_name="SITE_00001",
        power_type="GENERATOR",
        month="September",
        effective_date_of_visit=date(2017, 9, 11),
        previous_date_of_visit=date(2017, 9, 1),
        number_of_days=10,
        generator_capacity_kva=20.0,
        current_hour_meter=1100.0,
        previous_hour_meter=1000.0,
        running_time=100.0,
        consumption_his=120.0,
        consumption_rate=1.2,
        previous_fuel_qte=170.0,
        qte_fuel_found=50.0,
        qte_fuel_added=30.0,
        totale_qte_left=80.0,
    )
    base.update(overrides)
    return RawRecord(**base)


def engineered(**overrides) -> LabeledRecord:
    recs, rejected = engineer_features([make_raw(**overrides)])
    assert not rejected
    return recs[0]


def write_csv(path, rows, header=None):
    header = header or list(FIELD_TO_COLUMN.values())
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def csv_row(rec: RawRecord) -> list:
    row = []
    for fieldname in FIELD_TO_COLUMN:
        value = getattr(rec, fieldname)
        row.append(value.isoformat() if isinstance(value, date) else value)
    return row


class TestParseCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "data.csv"
        write_csv(path, [csv_row(make_raw())])
        records, rejections = parse_csv(path)
        assert rejections == []
        assert records == [make_raw()]

    def test_empty_file_with_header(self, tmp_path):
        path = tmp_path / "empty.csv"
        write_csv(path, [])
        records, rejections = parse_csv(path)
        assert records == [] and rejections == []

    def test_blank_field_rejected_with_row_number(self, tmp_path):
        rows = [csv_row(make_raw()) for _ in range(3)]
        running_time_col = list(FIELD_TO_COLUMN).index("running_time")
        rows[1][running_time_col] = ""
        path = tmp_path / "gap.csv"
        write_csv(path, rows)
        records, rejections = parse_csv(path)
        assert len(records) == 2
        assert len(rejections) == 1
        assert rejections[0].row == 2
        assert "RUNNING_TIME" in rejections[0].reason

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            parse_csv(tmp_path / "nope.csv")

    def test_missing_column_named(self, tmp_path):
        header = [c for c in FIELD_TO_COLUMN.values() if c != "CONSUMPTION_HIS"]
        path = tmp_path / "short.csv"
        write_csv(path, [], header=header)
        with pytest.raises(DataError, match="CONSUMPTION_HIS"):
            parse_csv(path)

    def test_day_count_cross_checked_against_dates(self, tmp_path):
        bad = make_raw(number_of_days=9)  # dates span 10 days
        path = tmp_path / "days.csv"
        write_csv(path, [csv_row(bad)])
        records, rejections = parse_csv(path)
        assert records == []
        assert len(rejections) == 1 and "span" in rejections[0].reason

    def test_negative_quantity_rejected(self, tmp_path):
        rows = [csv_row(make_raw())]
        rows[0][list(FIELD_TO_COLUMN).index("consumption_his")] = -5.0
        path = tmp_path / "neg.csv"
        write_csv(path, rows)
        records, rejections = parse_csv(path)
        assert records == [] and len(rejections) == 1

    def test_conservation(self, tmp_path):
        rows = [csv_row(make_raw()) for _ in range(5)]
        rows[0][list(FIELD_TO_COLUMN).index("running_time")] = "oops"
        rows[3][list(FIELD_TO_COLUMN).index("previous_date_of_visit")] = ""
        path = tmp_path / "mixed.csv"
        write_csv(path, rows)
        records, rejections = parse_csv(path)
        assert len(records) + len(rejections) == 5

    def test_6010_rows_with_105_incomplete(self, tmp_path):
        """Mirror of the source-dataset curation arithmetic: 6010 recorded
        rows, 105 dropped, 5905 usable."""
        records = generate_synthetic(6010, 0.0, seed=19,
                                     profiles=dataset.default_profiles())
        rows = [csv_row(r.raw) for r in records]
        hole = list(FIELD_TO_COLUMN).index("consumption_his")
        for k in range(105):
            rows[k * 57][hole] = ""
        path = tmp_path / "big.csv"
        write_csv(path, rows)
        parsed, rejections = parse_csv(path)
        assert len(parsed) == 5905
        assert len(rejections) == 105


class TestEngineerFeatures:
    def test_per_day_features(self):
        rec = engineered(running_time=48.0, number_of_days=2,
                         effective_date_of_visit=date(2017, 9, 3))
        assert rec.running_time_per_day == 24.0

    def test_daily_consumption(self):
        rec = engineered(consumption_his=100.0, number_of_days=4,
                         effective_date_of_visit=date(2017, 9, 5))
        assert rec.daily_consumption == 25.0

    def test_zero_days_routed_to_rejections(self):
        zero = make_raw(number_of_days=0,
                        effective_date_of_visit=date(2017, 9, 1))
        records, rejections = engineer_features([make_raw(), zero])
        assert len(records) == 1
        assert rejections == [Rejection(row=2, reason=rejections[0].reason)]

    def test_conservation(self):
        records_in = [make_raw(),
                      make_raw(number_of_days=0, effective_date_of_visit=date(2017, 9, 1)),
                      make_raw()]
        records, rejections = engineer_features(records_in)
        assert len(records) + len(rejections) == len(records_in)


class TestLabelRecord:
    def test_rule_r2_running_time_per_day(self):
        rec = engineered(running_time=78.0, number_of_days=3,
                         effective_date_of_visit=date(2017, 9, 4))
        labeled = label_record(rec, PROFILE)
        assert labeled.running_time_per_day == 26.0
        assert labeled.label == 1
        assert "R2" in labeled.triggered_rules

    def test_rule_r1_zero_runtime_with_consumption(self):
        rec = engineered(running_time=0.0, consumption_his=50.0,
                         current_hour_meter=1000.0)
        labeled = label_record(rec, PROFILE)
        assert labeled.label == 1
        assert labeled.triggered_rules >= {"R1"}

    def test_rule_r3_daily_consumption_cap(self):
        # cap = 24 * 1.6 = 38.4 L/day for the 20 kVA profile
        rec = engineered(consumption_his=400.0)  # 40 L/day over 10 days
        labeled = label_record(rec, PROFILE)
        assert labeled.label == 1
        assert labeled.triggered_rules == {"R3"}

    def test_no_rule_fires(self):
        rec = engineered(running_time=200.0, consumption_his=120.0)  # 20 h/day, 12 L/day
        labeled = label_record(rec, PROFILE)
        assert labeled.label == 0
        assert labeled.triggered_rules == frozenset()

    def test_idempotent(self):
        rec = engineered(running_time=260.0)
        once = label_record(rec, PROFILE)
        twice = label_record(once, PROFILE)
        assert once == twice

    def test_boundary_exactly_24_hours_is_normal(self):
        rec = engineered(running_time=240.0)  # exactly 24 h/day
        assert label_record(rec, PROFILE).label == 0


class TestGenerateSynthetic:
    def test_exact_anomaly_count(self):
        records = generate_synthetic(1000, 0.35, seed=42, profiles=[PROFILE])
        assert sum(r.label for r in records) == 350

    def test_single_normal_record(self):
        (record,) = generate_synthetic(1, 0.0, seed=0, profiles=[PROFILE])
        assert record.label == 0
        relabeled = label_record(record, PROFILE)
        assert relabeled.label == 0

    def test_bit_identical_reruns(self):
        a = generate_synthetic(200, 0.4, seed=9, profiles=dataset.default_profiles())
        b = generate_synthetic(200, 0.4, seed=9, profiles=dataset.default_profiles())
        assert a == b

    def test_seed_changes_output(self):
        a = generate_synthetic(50, 0.5, seed=1, profiles=[PROFILE])
        b = generate_synthetic(50, 0.5, seed=2, profiles=[PROFILE])
        assert a != b

    def test_rejects_bad_arguments(self):
        with pytest.raises(UsageError):
            generate_synthetic(0, 0.5, seed=1, profiles=[PROFILE])
        with pytest.raises(UsageError):
            generate_synthetic(10, 1.5, seed=1, profiles=[PROFILE])
        with pytest.raises(UsageError):
            generate_synthetic(10, 0.5, seed=1, profiles=[])

    def test_relabeling_reproduces_stored_labels(self):
        """Rule-engine oracle over the whole generated set; profiles vary
        per record, so the oracle rebuilds the cap from the capacity."""
        records = generate_synthetic(6000, 0.351, seed=7,
                                     profiles=dataset.default_profiles())
        assert sum(r.label for r in records) == 2106
        for rec in records:
            profile = GeneratorProfile.from_capacity(rec.raw.generator_capacity_kva)
            assert label_record(rec, profile).label == rec.label

    def test_invariants_hold(self):
        for rec in generate_synthetic(500, 0.3, seed=3, profiles=[PROFILE]):
            raw = rec.raw
            assert raw.totale_qte_left >= raw.qte_fuel_found
            assert raw.number_of_days >= 1
            span = (raw.effective_date_of_visit - raw.previous_date_of_visit).days
            assert span == raw.number_of_days
            assert raw.current_hour_meter >= raw.previous_hour_meter


class TestToFeatureMatrix:
    def test_shape_16_features(self):
        records = generate_synthetic(50, 0.2, seed=5, profiles=[PROFILE])
        matrix, labels = to_feature_matrix(records)
        assert matrix.values.shape == (16, 50)
        assert labels.shape == (50,)
        assert matrix.feature_names[matrix.priority_feature] == "running_time_per_day"

    def test_full_scale_matrix_shape(self):
        records = generate_synthetic(5905, 0.351, seed=5,
                                     profiles=dataset.default_profiles())
        matrix, labels = to_feature_matrix(records)
        assert matrix.values.shape == (16, 5905)
        assert labels.shape == (5905,)

    def test_empty_records(self):
        matrix, labels = to_feature_matrix([])
        assert matrix.values.shape == (16, 0)
        assert labels.size == 0

    def test_column_order_matches_selection(self):
        records = generate_synthetic(10, 0.0, seed=1, profiles=[PROFILE])
        names = ["consumption_his", "running_time", "number_of_days"]
        matrix, _ = to_feature_matrix(records, names)
        assert matrix.feature_names == names
        np.testing.assert_array_equal(
            matrix.values[0], [r.raw.consumption_his for r in records]
        )
        np.testing.assert_array_equal(
            matrix.values[2], [r.raw.number_of_days for r in records]
        )

    def test_columns_align_with_records(self):
        records = generate_synthetic(10, 0.5, seed=1, profiles=[PROFILE])
        matrix, labels = to_feature_matrix(records)
        idx = matrix.feature_names.index("running_time_per_day")
        for col, rec in enumerate(records):
            assert matrix.values[idx, col] == rec.running_time_per_day
            assert labels[col] == rec.label

    def test_unknown_feature(self):
        with pytest.raises(DataError, match="unknown feature"):
            to_feature_matrix([], ["no_such_feature"])


class TestCsvRoundTrip:
    def test_labeled_csv_round_trip(self, tmp_path):
        records = generate_synthetic(120, 0.4, seed=11, profiles=dataset.default_profiles())
        path = tmp_path / "labeled.csv"
        write_labeled_csv(records, path)
        loaded, rejections = read_labeled_csv(path)
        assert rejections == []
        assert loaded == records

    def test_labeled_csv_has_expected_columns(self, tmp_path):
        records = generate_synthetic(5, 0.2, seed=2, profiles=[PROFILE])
        path = tmp_path / "labeled.csv"
        write_labeled_csv(records, path)
        with open(path) as handle:
            header = next(csv.reader(handle))
        assert header[-4:] == ["running_time_per_day", "daily_consumption",
                               "label", "triggered_rules"]
        assert set(FIELD_TO_COLUMN.values()) <= set(header)

    def test_rejections_csv(self, tmp_path):
        path = tmp_path / "rejects.csv"
        write_rejections_csv([Rejection(row=3, reason="missing value")], path)
        with open(path) as handle:
            rows = list(csv.reader(handle))
        assert rows == [["row", "reason"], ["3", "missing value"]]

    def test_unlabeled_csv_gets_rule_labels(self, tmp_path):
        path = tmp_path / "raw.csv"
        write_csv(path, [csv_row(make_raw(running_time=260.0))])
        loaded, _ = read_labeled_csv(path, profiles=[PROFILE])
        assert loaded[0].label == 1
        assert "R2" in loaded[0].triggered_rules
