import numpy as np
import pytest

from drscreen.metrics import (
    EmptyInput,
    LengthMismatch,
    SingleClassOnly,
    benchmark_summary_csv,
    confusion,
    metric_report,
    roc_auc_binary,
    roc_auc_ovr,
)


# ---------------------------------------------------------------------------
# independent oracles

def counting_oracle(preds, actuals, n_classes=5):
    """Per-sample counting of TP/TN/FP/FN for every class, no matrix algebra."""
    out = {}
    total = len(preds)
    for c in range(n_classes):
        tp = sum(1 for p, a in zip(preds, actuals) if a == c and p == c)
        fn = sum(1 for p, a in zip(preds, actuals) if a == c and p != c)
        fp = sum(1 for p, a in zip(preds, actuals) if a != c and p == c)
        tn = total - tp - fn - fp
        acc = (tp + tn) / total
        recall = tp / (tp + fn) if tp + fn else 0.0
        spec = tn / (tn + fp) if tn + fp else 1.0
        prec = tp / (tp + fp) if tp + fp else 0.0
        f1 = 2 * prec * recall / (prec + recall) if prec + recall else 0.0
        out[c] = (acc, prec, recall, spec, f1, tp, tn, fp, fn)
    return out


def mann_whitney_auc(scores, positive):
    """Pairwise comparison oracle with half credit for ties."""
    pos = [s for s, p in zip(scores, positive) if p]
    neg = [s for s, p in zip(scores, positive) if not p]
    wins = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                wins += 1.0
            elif sp == sn:
                wins += 0.5
    return wins / (len(pos) * len(neg))


# ---------------------------------------------------------------------------
# confusion matrix

def test_identity_predictions_fill_diagonal():
    cm = confusion([0, 1, 2, 3, 4], [0, 1, 2, 3, 4])
    np.testing.assert_array_equal(cm, np.eye(5, dtype=np.int64))


def test_single_misprediction_cell():
    cm = confusion([1], [0])
    expect = np.zeros((5, 5), dtype=np.int64)
    expect[0, 1] = 1
    np.testing.assert_array_equal(cm, expect)


def test_confusion_matches_bruteforce_tally():
    rng = np.random.default_rng(0)
    preds = rng.integers(0, 5, size=1000)
    actuals = rng.integers(0, 5, size=1000)
    cm = confusion(preds, actuals)
    tally = np.zeros((5, 5), dtype=np.int64)
    for p, a in zip(preds, actuals):
        tally[a, p] += 1
    np.testing.assert_array_equal(cm, tally)
    assert cm.sum() == 1000


def test_confusion_errors():
    with pytest.raises(LengthMismatch):
        confusion([0, 1], [0])
    with pytest.raises(EmptyInput):
        confusion([], [])
    with pytest.raises(ValueError):
        confusion([9], [0])


# ---------------------------------------------------------------------------
# metric report

def test_worked_binary_case():
    # [[50, 10], [5, 35]] with class 1 as positive
    cm = np.array([[50, 10], [5, 35]])
    report = metric_report(cm)
    pos = report.per_class[1]
    assert pos.accuracy == pytest.approx(0.85, abs=1e-4)
    assert pos.recall == pytest.approx(0.875, abs=1e-4)
    assert pos.specificity == pytest.approx(0.8333, abs=1e-4)
    assert pos.precision == pytest.approx(0.7778, abs=1e-4)
    assert pos.f1 == pytest.approx(0.8235, abs=1e-4)
    assert report.overall_accuracy == pytest.approx(0.85, abs=1e-12)


def test_binary_accuracy_equals_one_minus_error_rate():
    cm = np.array([[50, 10], [5, 35]])
    report = metric_report(cm)
    assert report.per_class[1].accuracy == pytest.approx(1 - 15 / 100, abs=1e-12)


def test_perfect_diagonal_all_ones():
    cm = np.diag([10, 20, 30, 40, 50])
    report = metric_report(cm)
    for c in report.per_class:
        assert c.accuracy == c.precision == c.recall == c.specificity == c.f1 == 1.0
    assert report.overall_accuracy == 1.0
    assert report.macro_f1 == 1.0


def test_absent_class_conventions():
    # class 4 never appears in actuals or predictions
    cm = np.zeros((5, 5), dtype=int)
    cm[0, 0] = cm[1, 1] = 10
    report = metric_report(cm)
    absent = report.per_class[4]
    assert absent.recall == 0.0
    assert absent.precision == 0.0
    assert absent.f1 == 0.0
    assert absent.specificity == 1.0
    assert absent.degenerate


def test_report_matches_counting_oracle_on_1000_random_sets():
    rng = np.random.default_rng(1)
    preds = rng.integers(0, 5, size=1000)
    actuals = rng.integers(0, 5, size=1000)
    report = metric_report(confusion(preds, actuals))
    oracle = counting_oracle(list(preds), list(actuals))
    for c in range(5):
        acc, prec, recall, spec, f1, tp, tn, fp, fn = oracle[c]
        got = report.per_class[c]
        assert got.accuracy == pytest.approx(acc, abs=1e-12)
        assert got.precision == pytest.approx(prec, abs=1e-12)
        assert got.recall == pytest.approx(recall, abs=1e-12)
        assert got.specificity == pytest.approx(spec, abs=1e-12)
        assert got.f1 == pytest.approx(f1, abs=1e-12)
        assert tp + tn + fp + fn == 1000


def test_f1_harmonic_mean_equals_algebraic_form():
    rng = np.random.default_rng(2)
    preds = rng.integers(0, 5, size=400)
    actuals = rng.integers(0, 5, size=400)
    cm = confusion(preds, actuals)
    report = metric_report(cm)
    total = cm.sum()
    for c in range(5):
        tp = cm[c, c]
        fn = cm[c].sum() - tp
        fp = cm[:, c].sum() - tp
        algebraic = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
        assert report.per_class[c].f1 == pytest.approx(algebraic, abs=1e-12)


def test_sample_order_invariance():
    rng = np.random.default_rng(3)
    preds = rng.integers(0, 5, size=300)
    actuals = rng.integers(0, 5, size=300)
    perm = rng.permutation(300)
    a = metric_report(confusion(preds, actuals))
    b = metric_report(confusion(preds[perm], actuals[perm]))
    assert a.to_dict() == b.to_dict()


def test_macro_vs_weighted_aggregation():
    cm = np.zeros((5, 5), dtype=int)
    cm[0, 0] = 90
    cm[1, 0] = 10  # class 1 always missed
    macro = metric_report(cm, weighted=False)
    weighted = metric_report(cm, weighted=True)
    assert macro.macro_recall == pytest.approx((1.0 + 0.0 + 0.0 + 0.0 + 0.0) / 5)
    assert weighted.macro_recall == pytest.approx(0.9)


# ---------------------------------------------------------------------------
# AUC

def test_auc_perfect_separation():
    scores = np.array([0.9, 0.8, 0.2, 0.1])
    positive = np.array([True, True, False, False])
    assert roc_auc_binary(scores, positive) == 1.0


def test_auc_identical_scores_is_half():
    scores = np.full(10, 0.5)
    positive = np.arange(10) < 4
    assert roc_auc_binary(scores, positive) == pytest.approx(0.5, abs=1e-12)


def test_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(4)
    n = 200
    actuals = rng.integers(0, 5, size=n)
    raw = rng.random((n, 5))
    # quantize scores so ties actually occur
    raw = np.round(raw * 8) / 8
    scores = raw / raw.sum(axis=1, keepdims=True)
    macro, per_class = roc_auc_ovr(scores, actuals)
    oracle_values = []
    for c in np.unique(actuals):
        oracle = mann_whitney_auc(scores[:, c], actuals == c)
        assert per_class[int(c)] == pytest.approx(oracle, abs=1e-12)
        oracle_values.append(oracle)
    assert macro == pytest.approx(np.mean(oracle_values), abs=1e-12)


def test_auc_single_class_undefined():
    scores = np.full((4, 5), 0.2)
    with pytest.raises(SingleClassOnly):
        roc_auc_ovr(scores, np.zeros(4, dtype=int))


def test_auc_rejects_unnormalized_rows():
    with pytest.raises(ValueError):
        roc_auc_ovr(np.ones((3, 5)), np.array([0, 1, 2]))


# ---------------------------------------------------------------------------
# exports

def test_report_json_fields(corpus):
    report = metric_report(confusion([0, 1, 1], [0, 1, 2]))
    doc = report.to_dict()
    for field in (
        "overall_accuracy",
        "macro_accuracy",
        "macro_precision",
        "macro_recall",
        "macro_specificity",
        "macro_f1",
        "per_class",
    ):
        assert field in doc
    assert len(doc["per_class"]) == 5


def test_benchmark_summary_column_order():
    csv_text = benchmark_summary_csv(
        [
            {
                "model": "residual18",
                "accuracy": 0.854,
                "model_size_mb": 8.18,
                "inference_time_ms": 18,
                "flops_b": 1.8,
                "auc": 0.97,
                "precision": 0.852,
                "recall": 0.850,
                "f1": 0.851,
            }
        ]
    )
    header = csv_text.splitlines()[0]
    assert header == "model,accuracy,model_size_mb,inference_time_ms,flops_b,auc,precision,recall,f1"
    assert "0.854" in csv_text.splitlines()[1]
