"""Confusion-matrix accumulation and segmentation accuracy metrics
(per-class/mean F1, overall accuracy, per-class/mean IoU) with an
ignore-index that drops pixels from all counts."""

import logging

import numpy as np

log = logging.getLogger(__name__)


class ConfusionMatrix:
    """M x M count matrix; rows are ground truth, columns are prediction.

    Pixels whose ground truth equals `ignore_index` are never counted, so the
    total equals the number of evaluated pixels. Matrices accumulated by
    independent workers can be merged by addition.
    """

    def __init__(self, num_classes: int, ignore_index: int = 255):
        if num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if 0 <= ignore_index < num_classes:
            raise ValueError("ignore_index must lie outside [0, num_classes)")
        self.num_classes = num_classes
        self.ignore_index = ignore_index
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge confusion matrices of different sizes")
        self.counts += other.counts
        return self

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        out = ConfusionMatrix(self.num_classes, self.ignore_index)
        out.counts = self.counts.copy()
        return out.merge(other)

    def __repr__(self):
        return f"ConfusionMatrix(num_classes={self.num_classes}, total={self.total})"


def accumulate(cm: ConfusionMatrix, pred: np.ndarray, truth: np.ndarray) -> ConfusionMatrix:
    """Add one prediction/ground-truth pair of label masks into `cm`.

    Ground-truth pixels equal to the ignore index are skipped. The prediction
    must contain real class indices only.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")
    m = cm.num_classes
    if ((pred < 0) | (pred >= m)).any():
        raise ValueError(f"prediction contains labels outside [0, {m}) (ignore_index is not a valid prediction)")
    kept = truth != cm.ignore_index
    t = truth[kept].astype(np.int64)
    if ((t < 0) | (t >= m)).any():
        raise ValueError(f"ground truth contains labels outside [0, {m}) other than ignore_index={cm.ignore_index}")
    p = pred[kept].astype(np.int64)
    cm.counts += np.bincount(t * m + p, minlength=m * m).reshape(m, m)
    return cm


def _diag_row_col(cm: ConfusionMatrix):
    diag = np.diag(cm.counts).astype(np.float64)
    row = cm.counts.sum(axis=1).astype(np.float64)  # ground-truth pixels per class
    col = cm.counts.sum(axis=0).astype(np.float64)  # predicted pixels per class
    return diag, row, col


def f1_scores(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class F1 (harmonic mean of precision and recall) and their mean.

    Classes with precision + recall = 0 score 0. The mean averages the classes
    present in the ground truth; on full test sets that is every class, the
    distinction only matters for small synthetic tiles.
    """
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    diag, row, col = _diag_row_col(cm)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(col > 0, diag / col, 0.0)
        recall = np.where(row > 0, diag / row, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    present = row > 0
    if (f1[present] == 0).any():
        log.debug("degenerate classes scored F1=0: %s", np.flatnonzero(present & (f1 == 0)).tolist())
    mean = float(f1[present].mean()) if present.any() else 0.0
    return f1, mean


def overall_accuracy(cm: ConfusionMatrix) -> float:
    """Fraction of evaluated pixels classified correctly."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def mean_iou(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class intersection-over-union and their unweighted mean.

    The mean averages classes with a nonzero union (present in ground truth or
    prediction); classes absent from both are excluded rather than dragging
    the score to zero.
    """
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    diag, row, col = _diag_row_col(cm)
    union = row + col - diag
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, diag / np.where(union > 0, union, 1.0), 0.0)
    nonzero = union > 0
    mean = float(iou[nonzero].mean()) if nonzero.any() else 0.0
    return iou, mean


def metrics_summary(cm: ConfusionMatrix) -> dict:
    """All metrics plus pixel counts, in the JSON layout the evaluate CLI emits."""
    f1, mean_f1 = f1_scores(cm)
    iou, miou = mean_iou(cm)
    return {
        "per_class_f1": [float(v) for v in f1],
        "per_class_iou": [float(v) for v in iou],
        "mean_f1": mean_f1,
        "miou": miou,
        "overall_accuracy": overall_accuracy(cm),
        "pixels_per_class": [int(v) for v in cm.counts.sum(axis=1)],
        "total_pixels": cm.total,
    }
