"""
Tests for Metrics Service
"""

import itertools

import numpy as np
import pytest

from models.report_models import BenchRow, EvalReport
from services.metrics import (
    MetricsError, UndefinedMetricError, accuracy_recall, auc, confusion_counts, evaluate_scores,
    format_bench_table, format_eval_table, grad_norm_stats, report_line,
)


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p, q in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


class TestAuc:
    """Test cases for the Mann-Whitney AUC"""

    def test_worked_example(self):
        """Test scores [0.1, 0.4, 0.35, 0.8] with labels [0, 0, 1, 1] give 0.75"""
        assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)

    def test_all_tied(self):
        """Test identical scores give 0.5"""
        assert auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == pytest.approx(0.5)

    def test_perfect_ranking(self):
        """Test separated classes give 1"""
        assert auc([0.1, 0.2, 0.9, 0.95], [0, 0, 1, 1]) == 1.0

    def test_monotone_invariance(self, rng):
        """Test a strictly increasing transform leaves AUC unchanged"""
        scores = rng.normal(size=200)
        labels = (rng.random(200) < 0.3).astype(int)
        assert auc(np.exp(3 * scores) + 7, labels) == pytest.approx(auc(scores, labels), abs=1e-12)

    def test_pairwise_oracle(self, rng):
        """Test against the quadratic pairwise count with ties"""
        scores = rng.integers(0, 5, size=60).astype(float)
        labels = (rng.random(60) < 0.4).astype(int)
        labels[:2] = [0, 1]
        assert auc(scores, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)

    def test_single_class(self):
        """Test AUC is undefined without both classes"""
        with pytest.raises(UndefinedMetricError):
            auc([0.2, 0.7], [1, 1])

    def test_bad_labels(self):
        """Test non-binary labels are rejected"""
        with pytest.raises(MetricsError):
            auc([0.2, 0.7], [0, 2])

    def test_length_mismatch(self):
        """Test scores and labels must align"""
        with pytest.raises(MetricsError):
            auc([0.2, 0.7, 0.1], [0, 1])


class TestThresholdMetrics:
    """Test cases for accuracy and recall"""

    def test_confusion(self):
        """Test prediction is score >= threshold"""
        assert confusion_counts([0.5, 0.49, 0.9, 0.1], [1, 1, 0, 0]) == (1, 1, 1, 1)

    def test_accuracy_recall(self):
        """Test accuracy and recall on a worked example"""
        accuracy, recall = accuracy_recall([0.9, 0.2, 0.7, 0.1], [1, 1, 0, 0])
        assert accuracy == 0.5
        assert recall == 0.5

    def test_no_positives(self):
        """Test recall is undefined without positives"""
        accuracy, recall = accuracy_recall([0.9, 0.2], [0, 0])
        assert accuracy == 0.5
        assert recall is None

    def test_empty(self):
        """Test accuracy of nothing is undefined"""
        with pytest.raises(UndefinedMetricError):
            accuracy_recall([], [])


class TestReports:
    """Test cases for report assembly and formatting"""

    def test_evaluate_scores(self):
        """Test the report carries counts, AUC and privacy spend"""
        report = evaluate_scores([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1], epsilon=2.0, delta=1e-5)
        assert report.auc == pytest.approx(0.75)
        assert (report.tp, report.fp, report.tn, report.fn, report.n) == (1, 0, 2, 1, 4)
        assert report.epsilon == 2.0

    def test_single_class_report(self):
        """Test a one-class split reports AUC and recall as undefined"""
        report = evaluate_scores([0.9, 0.1], [0, 0])
        assert report.auc is None
        assert report.recall is None

    def test_inconsistent_counts_rejected(self):
        """Test the report validator refuses counts that do not sum to n"""
        with pytest.raises(ValueError):
            EvalReport(accuracy=0.5, tp=1, fp=1, tn=1, fn=1, n=5)

    def test_eval_table(self):
        """Test the table aligns rows and prints n/a and inf"""
        reports = [
            evaluate_scores([0.1, 0.8], [0, 1], label="plain", epsilon=float("inf")),
            evaluate_scores([0.9, 0.1], [0, 0], label="dp", epsilon=1.5),
        ]
        table = format_eval_table(reports).splitlines()
        assert table[0].startswith("run")
        assert "inf" in table[2]
        assert "n/a" in table[3]
        assert len({len(line) for line in table}) == 1

    def test_bench_table(self):
        """Test benchmark rows list multiplicative totals"""
        row = BenchRow(variant="square", trials=3, median_seconds=0.25, ct_mul=3, plain_mul=8, add=9)
        assert row.multiplicative == 11
        assert "11" in format_bench_table([row]).splitlines()[2]

    def test_report_line_is_json(self):
        """Test the machine-readable line parses back"""
        report = evaluate_scores([0.1, 0.8], [0, 1])
        assert EvalReport.model_validate_json(report_line(report)) == report


class TestGradNormStats:
    """Test cases for gradient-norm summaries"""

    def test_midpoint_median(self):
        """Test the median of {1, 2, 3, 4} is 2.5"""
        stats = grad_norm_stats([1.0, 2.0, 3.0, 4.0], label="raw")
        assert stats.median == 2.5
        assert stats.q1 <= stats.median <= stats.q3
        assert stats.count == 4

    def test_empty(self):
        """Test no norms is an error"""
        with pytest.raises(MetricsError):
            grad_norm_stats([])


if __name__ == "__main__":
    pytest.main([__file__])
