"""Evaluation metrics over hard masks: mIoU, Dice, accuracy, recall.

Everything is computed from per-class one-vs-rest confusion counts so a
brute-force pixel-scan oracle can verify the vectorized path exactly.
Conventions for binary segmentation (class 1 = foreground):

* mIoU averages TP/(TP+FP+FN) over both classes; a class absent from both
  masks contributes IoU 1.
* Dice and recall are reported for the foreground class; Dice carries the
  same smoothing epsilon as the loss, recall of an empty target is 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .losses import SMOOTH_EPS


@dataclass
class ConfusionCounts:
    """Per-class one-vs-rest tallies; arrays indexed by class id."""
    num_classes: int
    tp: np.ndarray = field(default=None)
    fp: np.ndarray = field(default=None)
    fn: np.ndarray = field(default=None)
    tn: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.num_classes, dtype=np.int64))

    def add(self, other: "ConfusionCounts") -> None:
        if other.num_classes != self.num_classes:
            raise InputError(
                f"cannot merge counts over {other.num_classes} classes into "
                f"counts over {self.num_classes}")
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.tn += other.tn

    @property
    def total(self) -> int:
        return int(self.tp[0] + self.fp[0] + self.fn[0] + self.tn[0])


def confusion_counts(pred: np.ndarray, target: np.ndarray,
                     num_classes: int = 2) -> ConfusionCounts:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise InputError(
            f"prediction shape {pred.shape} does not match target shape "
            f"{target.shape}")
    for name, m in (("prediction", pred), ("target", target)):
        vals = np.unique(m)
        if vals.size and (vals.min() < 0 or vals.max() >= num_classes):
            raise InputError(
                f"{name} mask contains class values outside 0..{num_classes - 1}")
    counts = ConfusionCounts(num_classes)
    for c in range(num_classes):
        p = pred == c
        t = target == c
        counts.tp[c] = np.count_nonzero(p & t)
        counts.fp[c] = np.count_nonzero(p & ~t)
        counts.fn[c] = np.count_nonzero(~p & t)
        counts.tn[c] = np.count_nonzero(~p & ~t)
    return counts


def compute_metrics(counts: ConfusionCounts) -> dict:
    tp = counts.tp.astype(np.float64)
    fp = counts.fp.astype(np.float64)
    fn = counts.fn.astype(np.float64)

    iou_denom = tp + fp + fn
    iou = np.where(iou_denom > 0, tp / np.maximum(iou_denom, 1), 1.0)
    miou = float(iou.mean())

    c = counts.num_classes - 1  # foreground
    dice = float((2.0 * tp[c] + SMOOTH_EPS)
                 / (2.0 * tp[c] + fp[c] + fn[c] + SMOOTH_EPS))
    accuracy = float((counts.tp[c] + counts.tn[c]) / max(counts.total, 1))
    rec_denom = tp[c] + fn[c]
    recall = float(tp[c] / rec_denom) if rec_denom > 0 else 1.0
    return {"miou": miou, "dice": dice, "accuracy": accuracy,
            "recall": recall}


def dice_coefficient(pred, target, eps: float = SMOOTH_EPS) -> float:
    """(2*sum(p*y) + eps) / (sum(p) + sum(y) + eps) on masks or probabilities.

    On hard masks this equals the confusion-count Dice exactly, and it is
    the complement of the probabilistic Dice loss evaluated on the same
    arrays.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise InputError(
            f"prediction shape {pred.shape} does not match target shape "
            f"{target.shape}")
    inter = float((pred * target).sum())
    denom = float(pred.sum() + target.sum())
    return (2.0 * inter + eps) / (denom + eps)


METRIC_NAMES = ("miou", "dice", "accuracy", "recall")


def format_metric_block(metrics: dict, prefix: str = "") -> str:
    """Flat key = value text block, one metric per line."""
    lines = [f"{prefix}{name} = {metrics[name]:.6f}" for name in METRIC_NAMES]
    return "\n".join(lines)
