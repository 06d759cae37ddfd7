"""Generator telemetry records: ingestion, synthesis, features and rule labels.

A telemetry record describes one refuelling visit to a generator site.
Three indicator rules decide the anomaly tag:

* R1 - the running time is zero but fuel was consumed,
* R2 - the running time per day exceeds 24 hours,
* R3 - the daily fuel consumption exceeds what the generator can burn
  in a day (24 h times its hourly consumption cap).

A record is tagged anomalous (label 1) when at least one rule fires.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, UsageError

# Default hourly consumption cap as a fraction of nameplate kVA; a typical
# small diesel genset burns roughly 0.08 L per kVA per hour at load.
DEFAULT_LITRES_PER_KVA_HOUR = 0.08

RULE_R1 = "R1"
RULE_R2 = "R2"
RULE_R3 = "R3"

HOURS_PER_DAY = 24.0


@dataclass(frozen=True)
class RawRecord:
    """One telemetry observation as recorded in the field."""

    cluster: str
    site_name: str
    power_type: str
    month: str
    effective_date_of_visit: Optional[date]
    previous_date_of_visit: Optional[date]
    number_of_days: int
    generator_capacity_kva: float
    current_hour_meter: float
    previous_hour_meter: float
    running_time: float
    consumption_his: float
    consumption_rate: float
    previous_fuel_qte: float
    qte_fuel_found: float
    qte_fuel_added: float
    totale_qte_left: float


@dataclass(frozen=True)
class GeneratorProfile:
    """Per-generator capacity and the hourly consumption cap used by rule R3."""

    capacity_kva: float
    max_hourly_consumption: float

    def __post_init__(self) -> None:
        if self.capacity_kva <= 0:
            raise UsageError("generator capacity must be positive")
        if self.max_hourly_consumption <= 0:
            raise UsageError("max hourly consumption must be positive")

    @classmethod
    def from_capacity(cls, capacity_kva: float) -> "GeneratorProfile":
        return cls(
            capacity_kva=capacity_kva,
            max_hourly_consumption=DEFAULT_LITRES_PER_KVA_HOUR * capacity_kva,
        )


@dataclass(frozen=True)
class LabeledRecord:
    """Raw record plus derived features and the rule-engine verdict."""

    raw: RawRecord
    running_time_per_day: float
    daily_consumption: float
    label: int = 0
    triggered_rules: frozenset = field(default_factory=frozenset)


@dataclass
class FeatureMatrix:
    """Numeric table, one column per observation and one row per feature."""

    values: np.ndarray  # shape (n_features, n_observations)
    feature_names: list
    priority_feature: int

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DataError("feature matrix must be 2-dimensional")
        if len(self.feature_names) != self.values.shape[0]:
            raise DataError("feature name count does not match row count")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("feature names must be unique")
        if not 0 <= self.priority_feature < len(self.feature_names):
            raise DataError("priority feature index out of range")

    @property
    def n_features(self) -> int:
        return self.values.shape[0]

    @property
    def n_observations(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Rejection:
    """A dropped input row: 1-based data row number plus the reason."""

    row: int
    reason: str


# Table-style CSV header names, upper-snake normalized.
FIELD_TO_COLUMN = {
    "cluster": "CLUSTER",
    "site_name": "SITE_NAME",
    "power_type": "POWER_TYPE",
    "month": "MONTHS",
    "effective_date_of_visit": "EFFECTIVE_DATE_OF_VISIT",
    "previous_date_of_visit": "PREVIOUS_DATE_OF_VISIT",
    "number_of_days": "NUMBER_OF_DAYS",
    "generator_capacity_kva": "GENERATOR_1_CAPACITY_KVA",
    "current_hour_meter": "CURRENT_HOUR_METER_GE1",
    "previous_hour_meter": "PREVIOUS_HOUR_METER_G1",
    "running_time": "RUNNING_TIME",
    "consumption_his": "CONSUMPTION_HIS",
    "consumption_rate": "CONSUMPTION_RATE",
    "previous_fuel_qte": "PREVIOUS_FUEL_QTE",
    "qte_fuel_found": "QTE_FUEL_FOUND",
    "qte_fuel_added": "QTE_FUEL_ADDED",
    "totale_qte_left": "TOTALE_QTE_LEFT",
}

_TEXT_FIELDS = ("cluster", "site_name", "power_type", "month")
_DATE_FIELDS = ("effective_date_of_visit", "previous_date_of_visit")
_QUANTITY_FIELDS = (
    "generator_capacity_kva",
    "current_hour_meter",
    "previous_hour_meter",
    "running_time",
    "consumption_his",
    "consumption_rate",
    "previous_fuel_qte",
    "qte_fuel_found",
    "qte_fuel_added",
    "totale_qte_left",
)

# Extra columns appended to CSVs of labeled data.
LABEL_COLUMNS = ("running_time_per_day", "daily_consumption", "label", "triggered_rules")


def _parse_date(text: str) -> date:
    return date.fromisoformat(text.strip())


def _parse_row(row: dict, schema: dict) -> RawRecord:
    """Build a RawRecord from one CSV row, raising ValueError on bad fields."""
    kwargs = {}
    for fieldname in _TEXT_FIELDS:
        value = row.get(schema[fieldname], "")
        if value is None or value.strip() == "":
            raise ValueError(f"missing value for {schema[fieldname]}")
        kwargs[fieldname] = value.strip()
    for fieldname in _DATE_FIELDS:
        value = row.get(schema[fieldname], "")
        if value is None or value.strip() == "":
            raise ValueError(f"missing value for {schema[fieldname]}")
        try:
            kwargs[fieldname] = _parse_date(value)
        except ValueError:
            raise ValueError(f"unparseable date in {schema[fieldname]}: {value!r}")
    days_text = row.get(schema["number_of_days"], "")
    if days_text is None or days_text.strip() == "":
        raise ValueError(f"missing value for {schema['number_of_days']}")
    try:
        days = int(float(days_text))
        if days != float(days_text):
            raise ValueError
    except ValueError:
        raise ValueError(
            f"unparseable integer in {schema['number_of_days']}: {days_text!r}"
        )
    if days < 0:
        raise ValueError(f"negative value in {schema['number_of_days']}: {days}")
    kwargs["number_of_days"] = days
    for fieldname in _QUANTITY_FIELDS:
        value = row.get(schema[fieldname], "")
        if value is None or value.strip() == "":
            raise ValueError(f"missing value for {schema[fieldname]}")
        try:
            number = float(value)
        except ValueError:
            raise ValueError(f"unparseable number in {schema[fieldname]}: {value!r}")
        if not np.isfinite(number):
            raise ValueError(f"non-finite value in {schema[fieldname]}: {value!r}")
        if number < 0:
            raise ValueError(f"negative quantity in {schema[fieldname]}: {number}")
        kwargs[fieldname] = number
    if kwargs["generator_capacity_kva"] <= 0:
        raise ValueError("generator capacity must be positive")
    record = RawRecord(**kwargs)
    # Cross-check the stored day count against the visit dates.
    span = (record.effective_date_of_visit - record.previous_date_of_visit).days
    if span != record.number_of_days:
        raise ValueError(
            f"number_of_days {record.number_of_days} does not match the"
            f" {span}-day span between visit dates"
        )
    return record


def parse_csv(
    path, schema: Optional[dict] = None
) -> tuple[list[RawRecord], list[Rejection]]:
    """Read raw telemetry records from a CSV file.

    Returns complete records plus a rejection list naming each dropped
    row (1-based, counting data rows) and the reason.  ``schema`` maps
    record field names to CSV column names; defaults to the upper-snake
    header set in ``FIELD_TO_COLUMN``.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    schema = dict(FIELD_TO_COLUMN if schema is None else schema)

    records: list[RawRecord] = []
    rejections: list[Rejection] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise DataError(f"no header row in {path}")
        missing = [col for col in schema.values() if col not in reader.fieldnames]
        if missing:
            raise DataError(f"header is missing required column(s): {', '.join(missing)}")
        for row_number, row in enumerate(reader, start=1):
            try:
                records.append(_parse_row(row, schema))
            except ValueError as exc:
                rejections.append(Rejection(row=row_number, reason=str(exc)))
    return records, rejections


def engineer_features(
    records: Sequence[RawRecord],
) -> tuple[list[LabeledRecord], list[Rejection]]:
    """Derive per-day running time and consumption for each record.

    Records with a zero day count cannot be normalized per day and are
    routed to the rejection list instead of raising.
    """
    out: list[LabeledRecord] = []
    rejections: list[Rejection] = []
    for index, rec in enumerate(records, start=1):
        if rec.number_of_days <= 0:
            rejections.append(
                Rejection(row=index, reason="number_of_days is zero; cannot derive per-day features")
            )
            continue
        out.append(
            LabeledRecord(
                raw=rec,
                running_time_per_day=rec.running_time / rec.number_of_days,
                daily_consumption=rec.consumption_his / rec.number_of_days,
            )
        )
    return out, rejections


def label_record(rec: LabeledRecord, profile: GeneratorProfile) -> LabeledRecord:
    """Apply the three indicator rules and set the anomaly tag.

    Idempotent: the verdict depends only on the record's features.
    """
    rules = set()
    if rec.raw.running_time == 0 and rec.raw.consumption_his > 0:
        rules.add(RULE_R1)
    if rec.running_time_per_day > HOURS_PER_DAY:
        rules.add(RULE_R2)
    if rec.daily_consumption > HOURS_PER_DAY * profile.max_hourly_consumption:
        rules.add(RULE_R3)
    return replace(rec, label=1 if rules else 0, triggered_rules=frozenset(rules))


_MONTH_NAMES = (
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
)

_SYNTH_BASE_DATE = date(2017, 9, 1)


def _synth_normal_fields(rng: np.random.Generator, profile: GeneratorProfile) -> dict:
    """Draw the free parameters of a rule-abiding record."""
    days = int(rng.integers(1, 15))
    start_offset = int(rng.integers(0, 365))
    # Hourly rate capped at 0.9x the generator limit so that daily
    # consumption stays below the R3 boundary even at +10% noise and
    # 23 h/day of running time (0.9 * 23 * 1.1 < 24).
    return {
        "days": days,
        "previous_date": _SYNTH_BASE_DATE + timedelta(days=start_offset),
        "running_time_per_day": rng.uniform(2.0, 23.0),
        "rate": rng.uniform(0.5, 0.9) * profile.max_hourly_consumption,
        "noise": rng.uniform(0.9, 1.1),
        "previous_hour_meter": rng.uniform(1000.0, 50000.0),
        "qte_fuel_found": rng.uniform(10.0, 150.0),
        "qte_fuel_added": rng.uniform(0.0, 250.0),
        "cluster_id": int(rng.integers(1, 47)),
    }


def _assemble_record(
    fields: dict, profile: GeneratorProfile, site_index: int
) -> RawRecord:
    days = fields["days"]
    previous_date = fields["previous_date"]
    effective_date = previous_date + timedelta(days=days)
    running_time = fields["running_time_per_day"] * days
    consumption = fields["consumption"]
    # The recorded rate is the generator's operating burn rate; under a
    # theft/leak anomaly it stays nominal while the tank delta jumps.
    consumption_rate = fields["rate"] * fields["noise"]
    found = fields["qte_fuel_found"]
    added = fields["qte_fuel_added"]
    return RawRecord(
        cluster=f"CLUSTER_{fields['cluster_id']:02d}",
        site_name=f"SITE_{site_index:05d}",
        power_type="GENERATOR",
        month=_MONTH_NAMES[effective_date.month - 1],
        effective_date_of_visit=effective_date,
        previous_date_of_visit=previous_date,
        number_of_days=days,
        generator_capacity_kva=profile.capacity_kva,
        current_hour_meter=fields["previous_hour_meter"] + running_time,
        previous_hour_meter=fields["previous_hour_meter"],
        running_time=running_time,
        consumption_his=consumption,
        consumption_rate=consumption_rate,
        previous_fuel_qte=found + consumption,
        qte_fuel_found=found,
        qte_fuel_added=added,
        totale_qte_left=found + added,
    )


def _inject_anomaly(fields: dict, rng: np.random.Generator, rule: str, cap: float) -> None:
    """Push one field set past the boundary of the chosen rule.

    The violation margin is a factor drawn uniformly from (1, 3].
    """
    factor = 3.0 - 2.0 * rng.uniform(0.0, 1.0)
    if rule == RULE_R1:
        # Meter shows no running time, yet fuel went missing.
        base = fields["rate"] * fields["running_time_per_day"] * fields["days"]
        fields["running_time_per_day"] = 0.0
        fields["consumption"] = base * fields["noise"] * factor
    elif rule == RULE_R2:
        fields["running_time_per_day"] = HOURS_PER_DAY * factor
        fields["consumption"] = (
            fields["rate"] * fields["running_time_per_day"] * fields["days"] * fields["noise"]
        )
    elif rule == RULE_R3:
        fields["consumption"] = cap * factor * fields["days"]
    else:
        raise ValueError(f"unknown rule {rule!r}")


def generate_synthetic(
    n: int,
    anomaly_rate: float,
    seed: int,
    profiles: Sequence[GeneratorProfile],
) -> list[LabeledRecord]:
    """Produce ``n`` labeled records with exactly ``round(n * anomaly_rate)``
    anomalies.

    Each anomalous record violates one rule chosen uniformly (it may
    incidentally trip others; the stored rule set is the rule engine's
    verdict).  Records are built from per-record substreams spawned off
    the master seed, so output is bit-reproducible and the generation of
    individual records is order-independent.
    """
    if n < 1:
        raise UsageError("n must be at least 1")
    if not 0.0 <= anomaly_rate <= 1.0:
        raise UsageError("anomaly_rate must lie in [0, 1]")
    if not profiles:
        raise UsageError("at least one generator profile is required")

    n_anomalies = int(round(n * anomaly_rate))
    master = np.random.default_rng(np.random.SeedSequence(seed))
    anomaly_indices = set(master.permutation(n)[:n_anomalies].tolist())
    substreams = np.random.SeedSequence(seed).spawn(n)

    records: list[LabeledRecord] = []
    for i in range(n):
        rng = np.random.default_rng(substreams[i])
        profile = profiles[int(rng.integers(len(profiles)))]
        cap = HOURS_PER_DAY * profile.max_hourly_consumption
        fields = _synth_normal_fields(rng, profile)
        fields["consumption"] = (
            fields["rate"] * fields["running_time_per_day"] * fields["days"] * fields["noise"]
        )
        target_label = 1 if i in anomaly_indices else 0
        if target_label:
            rule = (RULE_R1, RULE_R2, RULE_R3)[int(rng.integers(3))]
            _inject_anomaly(fields, rng, rule, cap)
        raw = _assemble_record(fields, profile, site_index=i)
        engineered, rejected = engineer_features([raw])
        if rejected:
            raise AssertionError("synthetic record rejected by feature engineering")
        labeled = label_record(engineered[0], profile)
        if labeled.label != target_label:
            raise AssertionError(
                f"synthetic record {i} labeled {labeled.label}, wanted {target_label}"
            )
        records.append(labeled)
    return records


# Sixteen numeric features available to the model: the eleven numeric raw
# fields, the two per-day derived features, and three calendar encodings.
NUMERIC_FEATURES = (
    "number_of_days",
    "generator_capacity_kva",
    "current_hour_meter",
    "previous_hour_meter",
    "running_time",
    "consumption_his",
    "consumption_rate",
    "previous_fuel_qte",
    "qte_fuel_found",
    "qte_fuel_added",
    "totale_qte_left",
    "running_time_per_day",
    "daily_consumption",
    "month_index",
    "effective_date_ordinal",
    "previous_date_ordinal",
)

DEFAULT_PRIORITY_FEATURE = "running_time_per_day"


def _feature_value(rec: LabeledRecord, name: str) -> float:
    if name == "running_time_per_day":
        return rec.running_time_per_day
    if name == "daily_consumption":
        return rec.daily_consumption
    if name == "month_index":
        if rec.raw.effective_date_of_visit is None:
            raise DataError("month_index requires an effective visit date")
        return float(rec.raw.effective_date_of_visit.month)
    if name == "effective_date_ordinal":
        if rec.raw.effective_date_of_visit is None:
            raise DataError("effective_date_ordinal requires an effective visit date")
        return float(rec.raw.effective_date_of_visit.toordinal())
    if name == "previous_date_ordinal":
        if rec.raw.previous_date_of_visit is None:
            raise DataError("previous_date_ordinal requires a previous visit date")
        return float(rec.raw.previous_date_of_visit.toordinal())
    if name in NUMERIC_FEATURES:
        return float(getattr(rec.raw, name))
    raise DataError(f"unknown feature name: {name!r}")


def to_feature_matrix(
    records: Sequence[LabeledRecord],
    feature_selection: Optional[Sequence[str]] = None,
) -> tuple[FeatureMatrix, np.ndarray]:
    """Assemble records into a features-by-observations matrix plus labels.

    Column ``i`` of the matrix is record ``i``; row order follows
    ``feature_selection`` exactly (default: all sixteen numeric features).
    """
    names = list(NUMERIC_FEATURES if feature_selection is None else feature_selection)
    for name in names:
        if name not in NUMERIC_FEATURES:
            raise DataError(f"unknown feature name: {name!r}")
    if DEFAULT_PRIORITY_FEATURE in names:
        priority = names.index(DEFAULT_PRIORITY_FEATURE)
    else:
        priority = 0
    values = np.empty((len(names), len(records)), dtype=float)
    for col, rec in enumerate(records):
        for row, name in enumerate(names):
            values[row, col] = _feature_value(rec, name)
    labels = np.array([rec.label for rec in records], dtype=int)
    matrix = FeatureMatrix(values=values, feature_names=names, priority_feature=priority)
    return matrix, labels


def write_labeled_csv(records: Sequence[LabeledRecord], path) -> None:
    """Write labeled records with the standard headers plus label columns."""
    columns = list(FIELD_TO_COLUMN.values())
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns + list(LABEL_COLUMNS))
        for rec in records:
            row = []
            for fieldname in FIELD_TO_COLUMN:
                value = getattr(rec.raw, fieldname)
                if isinstance(value, date):
                    value = value.isoformat()
                elif isinstance(value, float):
                    value = repr(value)
                row.append(value)
            row.extend(
                [
                    repr(rec.running_time_per_day),
                    repr(rec.daily_consumption),
                    rec.label,
                    "|".join(sorted(rec.triggered_rules)),
                ]
            )
            writer.writerow(row)


def write_rejections_csv(rejections: Sequence[Rejection], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["row", "reason"])
        for rej in rejections:
            writer.writerow([rej.row, rej.reason])


def read_labeled_csv(
    path, profiles: Optional[Sequence[GeneratorProfile]] = None
) -> tuple[list[LabeledRecord], list[Rejection]]:
    """Load a labeled CSV, trusting stored labels when present.

    Files without the label columns are engineered and labeled on the
    fly; the rule cap then comes from the record's own capacity via the
    default litres-per-kVA-hour figure (``profiles`` overrides by
    nearest capacity match).  Rejection rows are 1-based file data rows
    for both the parse and the zero-day stage.
    """
    records, parse_rej = parse_csv(path)
    total_rows = len(records) + len(parse_rej)
    parsed_rows = [
        r for r in range(1, total_rows + 1) if r not in {rej.row for rej in parse_rej}
    ]
    engineered, zero_day = engineer_features(records)
    # engineer_features numbers rejections by position in its input list;
    # remap onto file data rows.
    eng_rej = [replace(rej, row=parsed_rows[rej.row - 1]) for rej in zero_day]
    rejections = sorted(parse_rej + eng_rej, key=lambda rej: rej.row)
    surviving_rows = [
        row
        for idx, row in enumerate(parsed_rows, start=1)
        if idx not in {rej.row for rej in zero_day}
    ]

    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        has_labels = reader.fieldnames is not None and all(
            col in reader.fieldnames for col in ("label", "triggered_rules")
        )
        stored: list[tuple[int, frozenset]] = []
        if has_labels:
            for row in reader:
                rules = frozenset(r for r in (row["triggered_rules"] or "").split("|") if r)
                stored.append((int(row["label"]), rules))

    if has_labels:
        kept = [stored[row - 1] for row in surviving_rows]
        return (
            [
                replace(rec, label=label, triggered_rules=rules)
                for rec, (label, rules) in zip(engineered, kept)
            ],
            rejections,
        )

    labeled = []
    for rec in engineered:
        profile = _profile_for(rec.raw.generator_capacity_kva, profiles)
        labeled.append(label_record(rec, profile))
    return labeled, rejections


def _profile_for(
    capacity: float, profiles: Optional[Sequence[GeneratorProfile]]
) -> GeneratorProfile:
    if profiles:
        return min(profiles, key=lambda p: abs(p.capacity_kva - capacity))
    return GeneratorProfile.from_capacity(capacity)


DEFAULT_PROFILE_CAPACITIES = (10.0, 20.0, 30.0, 45.0, 60.0)


def default_profiles() -> list[GeneratorProfile]:
    return [GeneratorProfile.from_capacity(c) for c in DEFAULT_PROFILE_CAPACITIES]
