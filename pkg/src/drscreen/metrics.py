"""Confusion matrices and classification metrics.

Per class c the one-vs-rest reduction is TP = cm[c][c], FN = row_c - TP,
FP = col_c - TP, TN = total - TP - FN - FP, feeding

    accuracy    = (TP + TN) / (TP + TN + FP + FN)
    recall      = TP / (TP + FN)
    specificity = TN / (TN + FP)
    precision   = TP / (TP + FP)
    f1          = 2 * precision * recall / (precision + recall)

Zero-denominator conventions: precision/recall/f1 are 0 when their
denominator is empty, specificity is 1 when there are no negatives; affected
classes carry a degenerate flag.  Macro aggregation is the unweighted mean
over classes (weighted available via `weighted=True`).

ROC-AUC is one-vs-rest with trapezoidal area over the threshold sweep;
grouping tied scores makes it equal the pairwise (rank) statistic exactly.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MetricsError",
    "LengthMismatch",
    "EmptyInput",
    "SingleClassOnly",
    "ClassMetrics",
    "MetricReport",
    "confusion",
    "metric_report",
    "roc_auc_binary",
    "roc_auc_ovr",
    "benchmark_summary_csv",
]


class MetricsError(Exception):
    pass


class LengthMismatch(MetricsError):
    pass


class EmptyInput(MetricsError):
    pass


class SingleClassOnly(MetricsError):
    """AUC is undefined when only one class is present."""


def confusion(pred, actual, n_classes: int = 5) -> np.ndarray:
    """Count matrix with rows = actual, columns = predicted."""
    pred = np.asarray(pred, dtype=np.int64)
    actual = np.asarray(actual, dtype=np.int64)
    if pred.shape != actual.shape or pred.ndim != 1:
        raise LengthMismatch(f"pred {pred.shape} vs actual {actual.shape}")
    if pred.size == 0:
        raise EmptyInput("need at least one prediction")
    if pred.min() < 0 or pred.max() >= n_classes or actual.min() < 0 or actual.max() >= n_classes:
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (actual, pred), 1)
    return cm


@dataclass(frozen=True)
class ClassMetrics:
    accuracy: float
    precision: float
    recall: float
    specificity: float
    f1: float
    degenerate: bool  # some denominator was empty


@dataclass
class MetricReport:
    per_class: list[ClassMetrics]
    overall_accuracy: float  # trace / total (micro)
    macro_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_specificity: float
    macro_f1: float
    auc: float | None = None
    auc_defined: bool = True

    def to_dict(self) -> dict:
        return {
            "overall_accuracy": self.overall_accuracy,
            "macro_accuracy": self.macro_accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_specificity": self.macro_specificity,
            "macro_f1": self.macro_f1,
            "auc": self.auc,
            "auc_defined": self.auc_defined,
            "per_class": [
                {
                    "accuracy": c.accuracy,
                    "precision": c.precision,
                    "recall": c.recall,
                    "specificity": c.specificity,
                    "f1": c.f1,
                    "degenerate": c.degenerate,
                }
                for c in self.per_class
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def metric_report(cm: np.ndarray, weighted: bool = False) -> MetricReport:
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got {cm.shape}")
    if (cm < 0).any():
        raise ValueError("confusion matrix entries must be non-negative")
    total = int(cm.sum())
    if total == 0:
        raise EmptyInput("confusion matrix is empty")

    per_class: list[ClassMetrics] = []
    for c in range(cm.shape[0]):
        tp = int(cm[c, c])
        fn = int(cm[c].sum()) - tp
        fp = int(cm[:, c].sum()) - tp
        tn = total - tp - fn - fp
        degenerate = False

        accuracy = (tp + tn) / total
        if tp + fn > 0:
            recall = tp / (tp + fn)
        else:
            recall, degenerate = 0.0, True
        if tn + fp > 0:
            specificity = tn / (tn + fp)
        else:
            specificity, degenerate = 1.0, True
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision, degenerate = 0.0, True
        if precision + recall > 0:
            f1 = 2.0 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
            if tp + fn > 0 or tp + fp > 0:
                degenerate = degenerate or (tp == 0)
        per_class.append(ClassMetrics(accuracy, precision, recall, specificity, f1, degenerate))

    if weighted:
        w = cm.sum(axis=1).astype(np.float64)
        w = w / w.sum()
    else:
        w = np.full(cm.shape[0], 1.0 / cm.shape[0])
    agg = lambda vals: float(np.dot(w, vals))  # noqa: E731
    return MetricReport(
        per_class=per_class,
        overall_accuracy=float(np.trace(cm)) / total,
        macro_accuracy=agg([c.accuracy for c in per_class]),
        macro_precision=agg([c.precision for c in per_class]),
        macro_recall=agg([c.recall for c in per_class]),
        macro_specificity=agg([c.specificity for c in per_class]),
        macro_f1=agg([c.f1 for c in per_class]),
    )


def roc_auc_binary(scores: np.ndarray, positive: np.ndarray) -> float:
    """Trapezoidal ROC area for one positive class.

    Thresholds sweep the unique scores in descending order; tied scores move
    as one group, which reproduces average-rank tie handling.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassOnly("need both positive and negative samples")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positive[order].astype(np.float64)

    tp = np.cumsum(sorted_pos)
    fp = np.cumsum(1.0 - sorted_pos)
    # keep only the last index of each tied-score group
    last_of_group = np.r_[sorted_scores[1:] != sorted_scores[:-1], True]
    tpr = np.r_[0.0, tp[last_of_group] / n_pos]
    fpr = np.r_[0.0, fp[last_of_group] / n_neg]
    return float(np.trapezoid(tpr, fpr))


def roc_auc_ovr(scores: np.ndarray, actual) -> tuple[float, dict[int, float]]:
    """Macro one-vs-rest AUC over the classes present in `actual`.

    `scores` is (N, n_classes) of per-class probabilities (rows sum to 1).
    Returns (macro_auc, per_class_auc).  Raises SingleClassOnly when fewer
    than two classes appear.
    """
    scores = np.asarray(scores, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != actual.shape[0]:
        raise LengthMismatch(f"scores {scores.shape} vs actual {actual.shape}")
    if scores.shape[0] == 0:
        raise EmptyInput("need at least one sample")
    row_sums = scores.sum(axis=1)
    if np.abs(row_sums - 1.0).max() > 1e-6:
        raise ValueError("score rows must sum to 1")

    present = np.unique(actual)
    if present.size < 2:
        raise SingleClassOnly("AUC needs at least two classes in the labels")
    per_class: dict[int, float] = {}
    for c in present:
        per_class[int(c)] = roc_auc_binary(scores[:, int(c)], actual == c)
    macro = float(np.mean(list(per_class.values())))
    return macro, per_class


_SUMMARY_COLUMNS = [
    "model",
    "accuracy",
    "model_size_mb",
    "inference_time_ms",
    "flops_b",
    "auc",
    "precision",
    "recall",
    "f1",
]


def benchmark_summary_csv(rows: list[dict]) -> str:
    """Benchmark summary table (one row per model) in the conventional
    column order: accuracy, size, inference time, FLOPs, AUC, precision,
    recall, F1."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=_SUMMARY_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in _SUMMARY_COLUMNS})
    return buf.getvalue()
