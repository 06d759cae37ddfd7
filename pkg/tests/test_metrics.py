"""Confusion counting and metric formulas, including the published
reference confusion (TN=979, TA=455, FN=15, FA=27 over 1476 samples)."""

import numpy as np
import pytest

from fuelwatch.errors import DataError
from fuelwatch.metrics import ConfusionCounts, MetricSet, compute_metrics, confusion

REFERENCE = ConfusionCounts(tn=979, ta=455, fn=15, fa=27)


class TestConfusion:
    def test_reference_counts(self):
        """A prediction vector engineered to reproduce the reference split."""
        labels = [1] * 470 + [0] * 1006
        preds = [1] * 455 + [0] * 15 + [1] * 27 + [0] * 979
        c = confusion(preds, labels)
        assert c == REFERENCE
        assert c.total == 1476

    def test_all_correct(self):
        c = confusion([0, 1, 0, 1], [0, 1, 0, 1])
        assert (c.fn, c.fa) == (0, 0)
        assert (c.tn, c.ta) == (2, 2)

    def test_matches_manual_tally(self):
        rng = np.random.default_rng(7)
        preds = rng.integers(0, 2, size=10)
        labels = rng.integers(0, 2, size=10)
        c = confusion(preds, labels)
        tally = {"tn": 0, "ta": 0, "fn": 0, "fa": 0}
        for p, y in zip(preds, labels):
            if y == 1 and p == 1:
                tally["ta"] += 1
            elif y == 1 and p == 0:
                tally["fn"] += 1
            elif y == 0 and p == 1:
                tally["fa"] += 1
            else:
                tally["tn"] += 1
        assert c == ConfusionCounts(**tally)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            confusion([1, 0], [1])

    def test_negative_count_rejected(self):
        with pytest.raises(DataError):
            ConfusionCounts(tn=-1, ta=0, fn=0, fa=0)


class TestComputeMetrics:
    def test_reference_values(self):
        m = compute_metrics(REFERENCE)
        assert m.accuracy == pytest.approx(0.9715, abs=5e-4)
        assert m.precision == pytest.approx(0.9440, abs=5e-4)
        assert m.recall == pytest.approx(0.9681, abs=5e-4)
        assert m.specificity == pytest.approx(0.9732, abs=5e-4)
        assert m.f1 == pytest.approx(0.9559, abs=5e-4)

    def test_perfect_counts(self):
        m = compute_metrics(ConfusionCounts(tn=5, ta=3, fn=0, fa=0))
        assert m.accuracy == m.precision == m.recall == m.specificity == m.f1 == 1.0
        assert m.fpr == 0.0

    def test_uniform_counts(self):
        m = compute_metrics(ConfusionCounts(tn=1, ta=1, fn=1, fa=1))
        for value in (m.accuracy, m.precision, m.recall, m.fpr, m.specificity, m.f1):
            assert value == pytest.approx(0.5)

    def test_undefined_reported_as_none(self):
        """0/0 ratios must surface as None, never a coerced 0 or 1."""
        m = compute_metrics(ConfusionCounts(tn=10, ta=0, fn=0, fa=0))
        assert m.recall is None
        assert m.precision is None
        assert m.f1 is None
        assert m.accuracy == 1.0

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            compute_metrics(ConfusionCounts(tn=0, ta=0, fn=0, fa=0))

    def test_json_serializes_nulls(self):
        m = compute_metrics(ConfusionCounts(tn=10, ta=0, fn=0, fa=0))
        assert '"recall": null' in m.to_json()


@pytest.fixture(scope="module")
def random_counts():
    rng = np.random.default_rng(42)
    out = []
    while len(out) < 200:
        tn, ta, fn, fa = (int(v) for v in rng.integers(0, 50, size=4))
        if ta + fn > 0 and tn + fa > 0:
            out.append(ConfusionCounts(tn=tn, ta=ta, fn=fn, fa=fa))
    return out


class TestIdentities:
    """Algebraic identities over randomly drawn confusion matrices."""

    def test_recall_complement(self, random_counts):
        for c in random_counts:
            m = compute_metrics(c)
            assert m.recall + c.fn / (c.ta + c.fn) == pytest.approx(1.0, abs=1e-12)

    def test_specificity_fpr_complement(self, random_counts):
        for c in random_counts:
            m = compute_metrics(c)
            assert m.specificity + m.fpr == pytest.approx(1.0, abs=1e-12)

    def test_f1_between_precision_and_recall(self, random_counts):
        for c in random_counts:
            m = compute_metrics(c)
            if m.precision is None or m.f1 is None:
                continue
            assert min(m.precision, m.recall) - 1e-12 <= m.f1
            assert m.f1 <= max(m.precision, m.recall) + 1e-12

    def test_accuracy_is_weighted_recall_specificity(self, random_counts):
        for c in random_counts:
            m = compute_metrics(c)
            p = c.ta + c.fn
            n = c.tn + c.fa
            weighted = (p * m.recall + n * m.specificity) / (p + n)
            assert m.accuracy == pytest.approx(weighted, abs=1e-12)
