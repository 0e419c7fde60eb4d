"""Confusion-derived quality metrics for the positive (burned / change) class."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .raster import DimensionMismatch

__all__ = ["SegMetrics", "seg_metrics", "f1_iou_from_pr", "UNDEFINED"]

UNDEFINED = math.nan


def _ratio(num: int, den: int) -> float:
    return num / den if den else UNDEFINED


@dataclass(frozen=True)
class SegMetrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> float:
        # 2PR/(P+R) rewritten in counts; defined whenever tp+fp+fn > 0
        return _ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn)

    @property
    def iou(self) -> float:
        return _ratio(self.tp, self.tp + self.fp + self.fn)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "precision": self.precision, "recall": self.recall,
                "f1": self.f1, "iou": self.iou}

    def __str__(self):
        def f(v):
            return "undefined" if math.isnan(v) else f"{v:.4f}"
        return (f"tp={self.tp} fp={self.fp} fn={self.fn} tn={self.tn} "
                f"precision={f(self.precision)} recall={f(self.recall)} "
                f"f1={f(self.f1)} iou={f(self.iou)}")


def seg_metrics(pred: np.ndarray, gt: np.ndarray) -> SegMetrics:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    p, g = pred == 1, gt == 1
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return SegMetrics(tp, fp, fn, int(p.size - tp - fp - fn))


def f1_iou_from_pr(precision: float, recall: float) -> tuple[float, float]:
    """F1 and IoU implied by a precision/recall pair (ratios, not percent)."""
    if precision + recall == 0:
        return UNDEFINED, UNDEFINED
    f1 = 2 * precision * recall / (precision + recall)
    return f1, f1 / (2 - f1)
