"""
Segmentation metrics over per-pixel class scores.
"""

import numpy as np

from .errors import ArgumentError, ShapeError
from .tensor import Tensor


def predictions(scores: Tensor) -> np.ndarray:
    """Arg-max class per pixel, shape (batch, H, W)."""
    return np.argmax(scores.data, axis=1)


def _check(scores: Tensor, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    batch, _, height, width = scores.shape
    if labels.shape != (batch, height, width):
        raise ShapeError(f"labels {labels.shape} do not match scores {(batch, height, width)}")
    return labels.astype(np.int64)


def confusion_matrix(scores: Tensor, labels: np.ndarray, num_classes: int) -> np.ndarray:
    """counts[true, predicted]."""
    if num_classes < 1:
        raise ArgumentError(f"num_classes must be >= 1, got {num_classes}")
    labels = _check(scores, labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ArgumentError(f"label values must lie in [0, {num_classes})")
    predicted = predictions(scores)
    flat = labels.reshape(-1) * num_classes + predicted.reshape(-1)
    return np.bincount(flat, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def accuracy_from_confusion(counts: np.ndarray) -> float:
    total = counts.sum()
    return float(np.trace(counts) / total) if total else 0.0


def iou_from_confusion(counts: np.ndarray) -> float:
    """Mean IoU over classes that occur in the labels or the prediction."""
    intersection = np.diag(counts)
    union = counts.sum(axis=0) + counts.sum(axis=1) - intersection
    present = union > 0
    if not present.any():
        return 0.0
    return float(np.mean(intersection[present] / union[present]))


def pixel_accuracy(scores: Tensor, labels: np.ndarray) -> float:
    labels = _check(scores, labels)
    if labels.size == 0:
        return 0.0
    return float(np.mean(predictions(scores) == labels))


def mean_iou(scores: Tensor, labels: np.ndarray, num_classes: int) -> float:
    return iou_from_confusion(confusion_matrix(scores, labels, num_classes))
