"""Confusion-matrix metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MetricsReport:
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: float
    macro_f1: float
    class_names: tuple = ()
    # mean/std across folds, filled in by cross-validation
    fold_stats: dict = field(default_factory=dict)

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "confusion": self.confusion.tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "fold_stats": self.fold_stats,
        }


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predictions."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)), 1)
    return cm


def _safe_div(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.divide(a, b, out=np.zeros_like(a), where=b > 0)


def report_from_confusion(cm, class_names=()) -> MetricsReport:
    cm = np.asarray(cm, dtype=np.int64)
    tp = np.diag(cm).astype(float)
    precision = _safe_div(tp, cm.sum(axis=0))
    recall = _safe_div(tp, cm.sum(axis=1))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    total = cm.sum()
    accuracy = float(tp.sum() / total) if total else 0.0
    return MetricsReport(cm, precision, recall, f1, accuracy, float(np.mean(f1)), tuple(class_names))


def classification_report(y_true, y_pred, n_classes=3, class_names=()) -> MetricsReport:
    return report_from_confusion(confusion_matrix(y_true, y_pred, n_classes), class_names)


def mean_std(values) -> dict:
    """Population mean and standard deviation (ddof = 0)."""
    v = np.asarray(values, dtype=float)
    return {"mean": float(v.mean()), "std": float(v.std())}
