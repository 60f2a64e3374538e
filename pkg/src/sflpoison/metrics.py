"""Evaluation quantities: confusion matrix, accuracy, accuracy drop, per-class P/R/F."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def confusion(preds, labels, num_classes: int) -> np.ndarray:
    """counts[actual, predicted] over paired prediction/label lists."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ValueError(f"preds shape {preds.shape} and labels shape {labels.shape} "
                         "must be equal 1-D")
    for name, arr in (("preds", preds), ("labels", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{name} outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def accuracy(cm: np.ndarray) -> float:
    """Percentage of correctly classified samples: 100 * trace / total."""
    total = int(cm.sum())
    if total == 0:
        raise ValueError("empty confusion matrix")
    return 100.0 * float(np.trace(cm)) / total


def accuracy_drop(clean: float, attacked: float) -> float:
    """Relative accuracy drop in percent of the clean baseline."""
    if clean <= 0:
        raise ValueError(f"clean accuracy must be positive, got {clean}")
    return 100.0 * (clean - attacked) / clean


def per_class_recall(cm: np.ndarray) -> np.ndarray:
    """Fraction of each class's samples that were classified correctly (0/0 -> 0)."""
    totals = cm.sum(axis=1).astype(np.float64)
    diag = np.diag(cm).astype(np.float64)
    return np.divide(diag, totals, out=np.zeros_like(diag), where=totals > 0)


def per_class_prf(cm: np.ndarray) -> list[tuple[float, float, float]]:
    """(precision, recall, f-score) per class, any 0/0 defined as 0."""
    if cm.shape[0] < 2:
        raise ValueError("need at least two classes")
    out = []
    for c in range(cm.shape[0]):
        tp = float(cm[c, c])
        pred_c = float(cm[:, c].sum())
        actual_c = float(cm[c, :].sum())
        precision = tp / pred_c if pred_c > 0 else 0.0
        recall = tp / actual_c if actual_c > 0 else 0.0
        fscore = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        out.append((precision, recall, fscore))
    return out


@dataclass
class MetricsReport:
    """One evaluation snapshot; accuracy_drop is only set when a clean baseline exists."""

    accuracy: float
    per_class: list[tuple[float, float, float]]
    confusion: np.ndarray
    epoch: int
    accuracy_drop: float | None = None
    fingerprint: str = ""
    loss: float | None = field(default=None)


def evaluate_predictions(preds, labels, num_classes: int, epoch: int = 0) -> MetricsReport:
    cm = confusion(preds, labels, num_classes)
    return MetricsReport(accuracy(cm), per_class_prf(cm), cm, epoch)
