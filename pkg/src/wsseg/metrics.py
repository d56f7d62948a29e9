"""Confusion-matrix accumulation and mean IoU."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, UndefinedMetricError
from .grids import IGNORE, as_label_map

PRED_IGNORE_POLICIES = ("error", "miss")


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[gt, pred]`` over classes ``0..C``.

    ``missed[gt]`` counts pixels whose prediction was 255; they are only
    populated under the ``miss`` policy of :func:`accumulate`, where an ignore
    prediction is a wrong answer for every class.
    """

    counts: np.ndarray
    missed: np.ndarray

    @classmethod
    def empty(cls, num_classes: int):
        n = num_classes + 1
        return cls(np.zeros((n, n), dtype=np.int64), np.zeros(n, dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0] - 1

    @property
    def evaluated_pixels(self) -> int:
        return int(self.counts.sum() + self.missed.sum())

    def __add__(self, other):
        if self.counts.shape != other.counts.shape:
            raise InvalidArgumentError("cannot merge confusion matrices of different sizes")
        return ConfusionMatrix(self.counts + other.counts, self.missed + other.missed)


def accumulate(cm: ConfusionMatrix, pred, gt, pred_ignore: str = "error") -> ConfusionMatrix:
    if pred_ignore not in PRED_IGNORE_POLICIES:
        raise InvalidArgumentError(f"pred_ignore must be one of {PRED_IGNORE_POLICIES}")
    C = cm.num_classes
    pred = as_label_map(pred, C, "pred")
    gt = as_label_map(gt, C, "gt")
    if pred.shape != gt.shape:
        raise InvalidArgumentError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    keep = gt != IGNORE
    pred_ign = pred == IGNORE
    if pred_ignore == "error" and pred_ign.any():
        raise InvalidArgumentError("prediction contains ignore (255) pixels")

    n = C + 1
    sel = keep & ~pred_ign
    idx = gt[sel].astype(np.int64) * n + pred[sel]
    counts = np.bincount(idx, minlength=n * n).reshape(n, n)
    missed = np.bincount(gt[keep & pred_ign], minlength=n)
    return cm + ConfusionMatrix(counts, missed)


def miou(cm: ConfusionMatrix):
    """Per-class IoU (NaN where undefined) and their mean over the defined classes."""
    tp = np.diag(cm.counts).astype(np.float64)
    union = cm.counts.sum(axis=1) + cm.missed + cm.counts.sum(axis=0) - tp
    defined = union > 0
    if not defined.any():
        raise UndefinedMetricError("no class has a non-empty union; nothing was evaluated")
    per_class = np.full(tp.shape, np.nan)
    per_class[defined] = tp[defined] / union[defined]
    return per_class, float(per_class[defined].mean())


def metric_report(cm: ConfusionMatrix) -> dict:
    per_class, mean = miou(cm)
    return {
        "per_class": {str(c): (None if np.isnan(v) else float(v)) for c, v in enumerate(per_class)},
        "miou": mean,
        "evaluated_pixels": cm.evaluated_pixels,
    }
