"""Segmentation evaluation from confusion matrices.

Rows are ground truth, columns are predictions; ignore pixels never enter
the matrix. Classes absent from both ground truth and prediction are
excluded from the averages rather than counted as zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class ConfusionMatrix:
    n_classes: int
    counts: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros((self.n_classes, self.n_classes), dtype=np.int64)
        if self.counts.shape != (self.n_classes, self.n_classes):
            raise ValueError("counts shape does not match n_classes")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def update(
    cm: ConfusionMatrix, gt: np.ndarray, pred: np.ndarray, ignore_label: int = 255
) -> ConfusionMatrix:
    """Accumulate one (gt, pred) raster pair into cm (in place)."""
    if gt.shape != pred.shape:
        raise ValueError(f"raster dims differ: {gt.shape} vs {pred.shape}")
    g = gt.ravel().astype(np.int64)
    p = pred.ravel().astype(np.int64)
    keep = g != ignore_label
    g, p = g[keep], p[keep]
    c = cm.n_classes
    if np.any((g < 0) | (g >= c)):
        raise ValueError("ground-truth label out of range")
    if np.any((p < 0) | (p >= c)):
        raise ValueError("predicted label out of range")
    cm.counts += np.bincount(g * c + p, minlength=c * c).reshape(c, c)
    return cm


def merge(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    if a.n_classes != b.n_classes:
        raise ValueError("cannot merge matrices of different class counts")
    return ConfusionMatrix(a.n_classes, a.counts + b.counts)


def global_accuracy(cm: ConfusionMatrix) -> float:
    """Correct pixels over all evaluated pixels."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def per_class_accuracy(cm: ConfusionMatrix) -> np.ndarray:
    """diag / row sum; NaN for classes without ground-truth pixels."""
    row = cm.counts.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(row > 0, np.diag(cm.counts) / row, np.nan)


def class_avg_accuracy(cm: ConfusionMatrix) -> float:
    """Mean per-class accuracy over classes present in the ground truth."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    acc = per_class_accuracy(cm)
    return float(np.nanmean(acc))


def per_class_iou(cm: ConfusionMatrix) -> np.ndarray:
    """diag / (row + col - diag); NaN for classes seen in neither role."""
    diag = np.diag(cm.counts).astype(np.float64)
    union = cm.counts.sum(axis=1) + cm.counts.sum(axis=0) - diag
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, diag / union, np.nan)


def mean_iou(cm: ConfusionMatrix) -> float:
    """Mean IoU over classes with any ground-truth or predicted pixel."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.nanmean(per_class_iou(cm)))


def report(cm: ConfusionMatrix, class_names=None) -> dict:
    """The three scalars plus per-class accuracy and IoU."""
    acc = per_class_accuracy(cm)
    iou = per_class_iou(cm)
    per_class = []
    for c in range(cm.n_classes):
        per_class.append(
            {
                "class": c if class_names is None else class_names[c],
                "gt_pixels": int(cm.counts[c].sum()),
                "accuracy": None if np.isnan(acc[c]) else float(acc[c]),
                "iou": None if np.isnan(iou[c]) else float(iou[c]),
            }
        )
    return {
        "global_accuracy": global_accuracy(cm),
        "class_avg_accuracy": class_avg_accuracy(cm),
        "mean_iou": mean_iou(cm),
        "per_class": per_class,
    }


def save_report(cm: ConfusionMatrix, path: str | Path, class_names=None) -> dict:
    doc = report(cm, class_names)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    return doc
