"""Confusion-matrix accumulation and per-class IoU / mean IoU."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .core import IGNORE, NUM_CLASSES
from .groundtruth import LabelGrid

# Column holding ground-truth cells the prediction left unlabeled. Such
# cells count as misses (false negatives) for their true class.
NONE_COLUMN = NUM_CLASSES


def _zero_counts() -> np.ndarray:
    return np.zeros((NUM_CLASSES, NUM_CLASSES + 1), dtype=np.int64)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are ground truth, columns are predictions.

    The extra final column buckets cells the prediction marked ignore.
    Ground-truth ignore cells are never counted, so the total equals the
    number of evaluated cells.
    """

    counts: NDArray[np.int64] = field(default_factory=_zero_counts)

    def __post_init__(self):
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if counts.shape != (NUM_CLASSES, NUM_CLASSES + 1):
            raise ValueError(
                f"counts shape {counts.shape}, expected "
                f"{(NUM_CLASSES, NUM_CLASSES + 1)}"
            )
        if (counts < 0).any():
            raise ValueError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(counts=self.counts + other.counts)


def accumulate(
    cm: ConfusionMatrix, pred: LabelGrid, gt: LabelGrid
) -> ConfusionMatrix:
    """Add one grid pair's cell outcomes to the matrix.

    Cells whose ground truth is ignore are skipped entirely; cells the
    prediction left as ignore land in the none column of their true class.
    """
    if pred.spec != gt.spec:
        raise ValueError("prediction and ground truth use different grids")
    evaluated = gt.label != IGNORE
    g = gt.label[evaluated].astype(np.int64)
    p = pred.label[evaluated].astype(np.int64)
    p = np.where(p == IGNORE, NONE_COLUMN, p)
    width = NUM_CLASSES + 1
    flat = np.bincount(g * width + p, minlength=NUM_CLASSES * width)
    return ConfusionMatrix(counts=cm.counts + flat.reshape(NUM_CLASSES, width))


def iou_per_class(cm: ConfusionMatrix) -> NDArray[np.float64]:
    """Intersection over union per class, NaN where the class never occurs.

    IoU_c = TP_c / (TP_c + FP_c + FN_c); unlabeled-prediction cells count
    toward FN of their true class.
    """
    square = cm.counts[:, :NUM_CLASSES].astype(np.float64)
    tp = np.diag(square)
    fn = cm.counts.sum(axis=1).astype(np.float64) - tp
    fp = square.sum(axis=0) - tp
    denom = tp + fp + fn
    return np.divide(tp, denom, where=denom > 0, out=np.full(NUM_CLASSES, np.nan))


def mean_iou(ious: np.ndarray) -> float:
    """Mean over the defined (non-NaN) per-class values."""
    ious = np.asarray(ious, dtype=np.float64)
    if ious.shape != (NUM_CLASSES,):
        raise ValueError(f"expected {NUM_CLASSES} per-class values, got {ious.shape}")
    defined = ~np.isnan(ious)
    if not defined.any():
        raise ValueError("no class has a defined IoU")
    return float(ious[defined].mean())
