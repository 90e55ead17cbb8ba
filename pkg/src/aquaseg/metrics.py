"""Confusion-matrix accumulation and the benchmark's evaluation metrics.

A run reduces to one K x K pixel-count matrix (rows = ground truth,
columns = prediction); everything reported — overall pixel accuracy, mean
IoU, mean per-class accuracy, and per-group mean IoU — is derived from it.
Per-sample matrices merge by addition, so accumulation parallelizes
without affecting results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyMatrixError,
    LabelOutOfRangeError,
    ShapeMismatchError,
)
from .tensor_store import IGNORE_LABEL, CategoryRegistry


@dataclass(frozen=True)
class ConfusionMatrix:
    """Pixel counts indexed [ground truth, prediction]."""

    counts: np.ndarray

    @classmethod
    def zeros(cls, k: int) -> "ConfusionMatrix":
        return cls(counts=np.zeros((k, k), dtype=np.int64))

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def accumulate(
    cm: ConfusionMatrix, pred: np.ndarray, gt: np.ndarray
) -> ConfusionMatrix:
    """Count each non-ignored pixel into a new confusion matrix.

    Ground-truth pixels equal to :data:`IGNORE_LABEL` are skipped entirely;
    all other labels (in either array) must be < K.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(
            f"prediction shape {pred.shape} != ground truth shape {gt.shape}"
        )
    k = cm.k
    keep = gt != IGNORE_LABEL
    gt_kept = gt[keep].astype(np.int64)
    pred_kept = pred[keep].astype(np.int64)
    if gt_kept.size and (gt_kept.max() >= k or gt_kept.min() < 0):
        raise LabelOutOfRangeError(f"ground-truth label outside [0, {k})")
    if pred_kept.size and (pred_kept.max() >= k or pred_kept.min() < 0):
        raise LabelOutOfRangeError(f"predicted label outside [0, {k})")
    flat = gt_kept * k + pred_kept
    delta = np.bincount(flat, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts=cm.counts + delta)


def merge(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    """Element-wise sum; associative and commutative."""
    if a.k != b.k:
        raise ShapeMismatchError(f"cannot merge {a.k}-class and {b.k}-class matrices")
    return ConfusionMatrix(counts=a.counts + b.counts)


@dataclass(frozen=True)
class MetricsReport:
    """Scalar metrics plus the per-class and per-group breakdown.

    ``per_class_iou`` / ``per_class_acc`` map category index to value and
    omit absent classes (those never seen in ground truth or prediction).
    ``grouped`` is keyed by split name, then group name; a group none of
    whose members are present carries None.
    """

    aacc: float
    miou: float
    macc: float
    per_class_iou: dict[int, float]
    per_class_acc: dict[int, float]
    grouped: dict[str, dict[str, float | None]] = field(default_factory=dict)
    sample_count: int = 0


def compute(
    cm: ConfusionMatrix,
    registry: CategoryRegistry | None = None,
    sample_count: int = 0,
) -> MetricsReport:
    """Derive all metrics from a confusion matrix.

    A class is *present* when any pixel involves it (TP + FP + FN > 0);
    only present classes enter the IoU mean. Per-class accuracy needs
    ground-truth pixels (TP + FN > 0), so prediction-only classes are
    excluded from the accuracy mean. Group scores are plain means of the
    member IoUs that are present: confusions inside a group still count
    against it.
    """
    counts = cm.counts
    if counts.size == 0 or counts.sum() == 0:
        raise EmptyMatrixError("confusion matrix holds no observations")
    if registry is not None and registry.num_categories != cm.k:
        raise ShapeMismatchError(
            f"registry has {registry.num_categories} categories, matrix has {cm.k}"
        )

    tp = np.diag(counts).astype(np.float64)
    gt_totals = counts.sum(axis=1).astype(np.float64)
    pred_totals = counts.sum(axis=0).astype(np.float64)
    union = gt_totals + pred_totals - tp

    aacc = float(tp.sum() / counts.sum())

    iou_present = union > 0
    acc_present = gt_totals > 0
    per_class_iou = {
        int(i): float(tp[i] / union[i]) for i in np.flatnonzero(iou_present)
    }
    per_class_acc = {
        int(i): float(tp[i] / gt_totals[i]) for i in np.flatnonzero(acc_present)
    }
    miou = float(np.mean(list(per_class_iou.values())))
    macc = float(np.mean(list(per_class_acc.values())))

    grouped: dict[str, dict[str, float | None]] = {}
    if registry is not None:
        for split_name, groups in registry.splits.items():
            grouped[split_name] = {}
            for group_name, indices in groups.items():
                member_ious = [
                    per_class_iou[i] for i in indices if i in per_class_iou
                ]
                grouped[split_name][group_name] = (
                    float(np.mean(member_ious)) if member_ious else None
                )

    return MetricsReport(
        aacc=aacc,
        miou=miou,
        macc=macc,
        per_class_iou=per_class_iou,
        per_class_acc=per_class_acc,
        grouped=grouped,
        sample_count=sample_count,
    )
