"""Confusion matrices, weighted metrics, comparison tables, and heatmaps."""

import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsfuse.base import DataError
from cpsfuse.metrics import (
    WeightedSummary,
    compare_models,
    confusion,
    format3,
    heatmap_svg,
    render_compare_csv,
    render_compare_text,
    report_to_csv,
    row_normalize,
    weighted_metrics,
)


def brute_force_metrics(y_true, y_pred, classes):
    """Independent per-definition recomputation with explicit loops."""
    per_class = {}
    for c in classes:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        support = sum(1 for t in y_true if t == c)
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        per_class[c] = (prec, rec, f1, support)
    total = len(y_true)
    acc = sum(1 for t, p in zip(y_true, y_pred) if t == p) / total
    w_prec = sum(v[0] * v[3] for v in per_class.values()) / total
    w_rec = sum(v[1] * v[3] for v in per_class.values()) / total
    w_f1 = sum(v[2] * v[3] for v in per_class.values()) / total
    return acc, w_prec, w_rec, w_f1, per_class


class TestConfusion:
    def test_perfect_predictions_diagonal(self):
        cm = confusion(["A", "B", "A"], ["A", "B", "A"], ["A", "B"])
        assert np.array_equal(cm.counts, [[2, 0], [0, 1]])

    def test_hand_count(self):
        cm = confusion(["A", "A", "B", "B"], ["A", "B", "B", "B"], ["A", "B"])
        assert np.array_equal(cm.counts, [[1, 1], [0, 2]])

    def test_empty_inputs_zero_matrix(self):
        cm = confusion([], [], ["A", "B"])
        assert cm.counts.sum() == 0

    def test_unknown_label_rejected(self):
        with pytest.raises(DataError, match="'C'"):
            confusion(["C"], ["A"], ["A", "B"])

    def test_length_mismatch_rejected(self):
        with pytest.raises(DataError, match="mismatch"):
            confusion(["A"], ["A", "B"], ["A", "B"])


class TestRowNormalize:
    def test_hand_arithmetic(self):
        cm = confusion(
            ["A", "A", "A", "A", "B", "B", "B", "B"],
            ["A", "A", "B", "B", "B", "B", "B", "B"],
            ["A", "B"],
        )
        np.testing.assert_allclose(row_normalize(cm), [[0.5, 0.5], [0.0, 1.0]])

    def test_diagonal_becomes_identity_pattern(self):
        cm = confusion(["A", "B", "B"], ["A", "B", "B"], ["A", "B"])
        np.testing.assert_allclose(row_normalize(cm), np.eye(2))

    def test_zero_row_stays_zero(self):
        cm = confusion(["A"], ["A"], ["A", "B"])
        normalized = row_normalize(cm)
        np.testing.assert_array_equal(normalized[1], [0.0, 0.0])

    @settings(max_examples=50, deadline=None)
    @given(
        labels=st.lists(
            st.tuples(st.sampled_from("ABC"), st.sampled_from("ABC")), min_size=1, max_size=60
        )
    )
    def test_nonzero_rows_sum_to_one(self, labels):
        y_true = [t for t, _ in labels]
        y_pred = [p for _, p in labels]
        normalized = row_normalize(confusion(y_true, y_pred, ["A", "B", "C"]))
        sums = normalized.sum(axis=1)
        for value in sums:
            assert value == pytest.approx(1.0, abs=1e-12) or value == 0.0


class TestWeightedMetrics:
    def test_hand_two_thirds(self):
        summary, report = weighted_metrics(["A", "A", "B"], ["A", "B", "B"])
        assert summary.f1 == pytest.approx(2 / 3, abs=1e-12)
        for row in report.rows:
            assert row.f1 == pytest.approx(2 / 3, abs=1e-12)

    def test_perfect_predictions_all_ones(self):
        summary, _ = weighted_metrics(["A", "B"], ["A", "B"])
        assert summary.as_tuple() == (1.0, 1.0, 1.0, 1.0)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            weighted_metrics([], [])

    def test_accuracy_equals_trace_over_total(self):
        rng = np.random.default_rng(5)
        classes = list("ABCDE")
        y_true = list(rng.choice(classes, 200))
        y_pred = list(rng.choice(classes, 200))
        summary, _ = weighted_metrics(y_true, y_pred, classes)
        cm = confusion(y_true, y_pred, classes)
        assert summary.accuracy == pytest.approx(
            np.trace(cm.counts) / cm.total, abs=1e-12
        )

    def test_matches_brute_force_and_recall_identity(self):
        rng = np.random.default_rng(11)
        for trial in range(100):
            k = int(rng.integers(2, 13))
            n = int(rng.integers(1, 300))
            classes = [f"K{j}" for j in range(k)]
            y_true = list(rng.choice(classes, n))
            y_pred = list(rng.choice(classes, n))
            summary, report = weighted_metrics(y_true, y_pred, classes)
            acc, w_prec, w_rec, w_f1, per_class = brute_force_metrics(y_true, y_pred, classes)
            assert summary.accuracy == pytest.approx(acc, abs=1e-12)
            assert summary.precision == pytest.approx(w_prec, abs=1e-12)
            assert summary.recall == pytest.approx(w_rec, abs=1e-12)
            assert summary.f1 == pytest.approx(w_f1, abs=1e-12)
            assert summary.recall == pytest.approx(summary.accuracy, abs=1e-12)
            for row in report.rows:
                prec, rec, f1, support = per_class[row.class_label]
                assert row.precision == pytest.approx(prec, abs=1e-12)
                assert row.recall == pytest.approx(rec, abs=1e-12)
                assert row.f1 == pytest.approx(f1, abs=1e-12)
                assert row.support == support

    def test_supports_sum_to_instance_count(self):
        _, report = weighted_metrics(["A", "A", "B"], ["B", "B", "B"], ["A", "B"])
        assert report.total_support == 3

    def test_report_csv_layout(self):
        _, report = weighted_metrics(["A", "A", "B"], ["A", "B", "B"])
        lines = report_to_csv(report).strip().split("\n")
        assert lines[0] == "class,precision,recall,f1,support"
        assert len(lines) == 3


class TestFormat3:
    def test_strips_leading_zero(self):
        assert format3(0.524) == ".524"
        assert format3(0.5241) == ".524"
        assert format3(0.598) == ".598"

    def test_one_keeps_digit(self):
        assert format3(1.0) == "1.000"


def summaries_from_f1(f1_values, accuracy=None):
    """Build one-dimension summaries where every metric equals the F1."""
    out = {}
    for i, f1 in enumerate(f1_values):
        v = f1 if accuracy is None else accuracy[i]
        out[f"model{i + 1}"] = {
            "social-cognitive": WeightedSummary(accuracy=v, precision=f1, recall=v, f1=f1)
        }
    return out


class TestCompareModels:
    def test_paper_style_f1_column_marks(self):
        # four models with F1 .468, .455, .573, .587: best is model 4, second model 3
        table = compare_models(summaries_from_f1([0.468, 0.455, 0.573, 0.587]))
        marks = table.marks[("social-cognitive", "F1")]
        assert marks["best"] == {"model4"}
        assert marks["second"] == {"model3"}

    def test_tied_best_shares_mark(self):
        table = compare_models(summaries_from_f1([0.8, 0.8, 0.5]))
        marks = table.marks[("social-cognitive", "F1")]
        assert marks["best"] == {"model1", "model2"}
        assert marks["second"] == {"model3"}

    def test_single_value_renders_three_decimals(self):
        table = compare_models(summaries_from_f1([0.598, 0.1]))
        text = render_compare_text(table)
        assert "**.598**" in text

    def test_row_reordering_invariance(self):
        base = summaries_from_f1([0.3, 0.9, 0.6])
        reordered = {k: base[k] for k in ["model2", "model3", "model1"]}
        t1 = compare_models(base)
        t2 = compare_models(reordered)
        assert t1.marks == t2.marks

    def test_inconsistent_dimensions_rejected(self):
        bad = summaries_from_f1([0.5, 0.6])
        bad["model2"] = {"affective": bad["model2"]["social-cognitive"]}
        with pytest.raises(DataError, match="dimensions"):
            compare_models(bad)

    def test_fewer_than_two_models_rejected(self):
        with pytest.raises(DataError):
            compare_models(summaries_from_f1([0.5]))

    def test_csv_has_value_and_mark_columns(self):
        table = compare_models(summaries_from_f1([0.468, 0.587]))
        csv = render_compare_csv(table)
        header = csv.split("\n")[0].split(",")
        assert "social-cognitive.F1" in header
        assert "social-cognitive.F1.mark" in header
        assert ".587,best" in csv


class TestHeatmapSvg:
    def test_identity_pattern_annotations(self):
        svg = heatmap_svg(np.eye(2), ["A", "B"], "demo").decode()
        assert svg.count("<rect") == 5  # 4 cells + background
        assert svg.count(">1.00</text>") == 2
        assert svg.count(">0.00</text>") == 2

    def test_byte_determinism(self):
        m = np.array([[0.25, 0.75], [0.6, 0.4]])
        assert heatmap_svg(m, ["A", "B"], "t") == heatmap_svg(m, ["A", "B"], "t")

    def test_ten_class_layout(self):
        classes = [f"SS{i}" for i in range(1, 9)] + ["SC1", "SC2"]
        m = np.full((10, 10), 0.1)
        svg = heatmap_svg(m, classes, "social").decode()
        assert svg.count("<rect") == 101
        for label in classes:
            assert f">{label}</text>" in svg

    def test_displayed_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        raw = rng.random((13, 13))
        m = raw / raw.sum(axis=1, keepdims=True)
        svg = heatmap_svg(m, [f"K{i}" for i in range(13)], "t").decode()
        cells = [float(v) for v in re.findall(r'fill="(?:white|black)">(\d\.\d\d)</text>', svg)]
        assert len(cells) == 169
        rows = np.array(cells).reshape(13, 13)
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=0.005)

    def test_non_square_rejected(self):
        with pytest.raises(DataError, match="square"):
            heatmap_svg(np.zeros((2, 3)), ["A", "B"], "t")

    def test_out_of_range_rejected(self):
        with pytest.raises(DataError):
            heatmap_svg(np.array([[1.5]]), ["A"], "t")
