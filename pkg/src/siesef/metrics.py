"""Confusion-matrix accumulation and segmentation metrics (IoU, mIoU, OA)."""
from __future__ import annotations

import numpy as np

from .errors import ShapeError

IGNORE_LABEL = 255


class ConfusionMatrix:
    """C x C integer counts, rows = ground truth, columns = prediction.

    Accumulation is plain integer addition, so it is exact, order-independent
    and chunkable; partial matrices merge with ``+``.
    """

    def __init__(self, num_classes: int, counts: np.ndarray | None = None):
        if num_classes < 1:
            raise ShapeError(f"num_classes must be >= 1, got {num_classes}")
        self.num_classes = num_classes
        if counts is None:
            self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        else:
            counts = np.asarray(counts, dtype=np.int64)
            if counts.shape != (num_classes, num_classes):
                raise ShapeError(f"counts must be [{num_classes}, {num_classes}], got {counts.shape}")
            if (counts < 0).any():
                raise ShapeError("confusion counts must be non-negative")
            self.counts = counts

    def accumulate(self, predictions, labels, ignore_label: int = IGNORE_LABEL) -> "ConfusionMatrix":
        predictions = np.asarray(predictions).reshape(-1)
        labels = np.asarray(labels).reshape(-1)
        if predictions.shape != labels.shape:
            raise ShapeError(
                f"predictions ({predictions.shape}) and labels ({labels.shape}) differ in length")
        keep = labels != ignore_label
        predictions, labels = predictions[keep], labels[keep]
        c = self.num_classes
        if predictions.size:
            if labels.min() < 0 or labels.max() >= c:
                raise ShapeError(f"labels outside [0, {c})")
            if predictions.min() < 0 or predictions.max() >= c:
                raise ShapeError(f"predictions outside [0, {c})")
            np.add.at(self.counts, (labels, predictions), 1)
        return self

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ShapeError("cannot merge confusion matrices of different sizes")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def per_class_iou(cm: ConfusionMatrix) -> np.ndarray:
    """TP / (TP + FP + FN) per class; classes absent from both truth and
    prediction come back as NaN (undefined)."""
    counts = cm.counts
    tp = np.diag(counts).astype(np.float64)
    fn = counts.sum(axis=1) - tp
    fp = counts.sum(axis=0) - tp
    denom = tp + fp + fn
    iou = np.full(cm.num_classes, np.nan)
    defined = denom > 0
    iou[defined] = tp[defined] / denom[defined]
    return iou


def miou(cm: ConfusionMatrix, undefined: str = "exclude") -> float:
    """Mean IoU over defined classes; ``undefined="zero"`` counts absent
    classes as 0 instead (some benchmarks do)."""
    iou = per_class_iou(cm)
    defined = ~np.isnan(iou)
    if not defined.any():
        raise ShapeError("mIoU undefined: every class is absent from truth and prediction")
    if undefined == "exclude":
        return float(iou[defined].mean())
    if undefined == "zero":
        return float(np.nan_to_num(iou).mean())
    raise ValueError(f"unknown undefined-class policy {undefined!r}")


def overall_accuracy(cm: ConfusionMatrix) -> float:
    """Trace over total: the multiclass overall accuracy."""
    total = cm.total
    if total == 0:
        raise ShapeError("overall accuracy undefined on an empty confusion matrix")
    return float(np.trace(cm.counts) / total)
