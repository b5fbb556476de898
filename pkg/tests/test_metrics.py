"""
Tests for pixel accuracy, confusion matrix and mean IoU.
"""

import numpy as np
import pytest

from src import metrics
from src.errors import ArgumentError, ShapeError
from src.tensor import Tensor


def _scores_for(predicted, num_classes=2):
    """Scores whose arg-max is ``predicted`` (batch, H, W)."""
    predicted = np.asarray(predicted)
    scores = np.zeros((predicted.shape[0], num_classes) + predicted.shape[1:])
    np.put_along_axis(scores, predicted[:, np.newaxis], 1.0, axis=1)
    return Tensor(scores)


def test_perfect_prediction():
    labels = np.array([[[0, 1], [1, 0]]])
    scores = _scores_for(labels)
    assert metrics.pixel_accuracy(scores, labels) == 1.0
    assert metrics.mean_iou(scores, labels, 2) == 1.0


def test_confusion_counts():
    labels = np.array([[[0, 0], [1, 1]]])
    scores = _scores_for([[[0, 1], [1, 1]]])
    counts = metrics.confusion_matrix(scores, labels, 2)
    np.testing.assert_array_equal(counts, [[1, 1], [0, 2]])
    assert metrics.pixel_accuracy(scores, labels) == 0.75
    # class 0: 1 / 2, class 1: 2 / 3
    assert metrics.mean_iou(scores, labels, 2) == pytest.approx((0.5 + 2 / 3) / 2)


def test_absent_classes_are_skipped():
    labels = np.zeros((1, 2, 2), dtype=int)
    scores = _scores_for(labels, num_classes=3)
    assert metrics.mean_iou(scores, labels, 3) == 1.0


def test_argument_checks():
    scores = _scores_for(np.zeros((1, 2, 2), dtype=int))
    with pytest.raises(ShapeError):
        metrics.pixel_accuracy(scores, np.zeros((1, 3, 3)))
    with pytest.raises(ArgumentError):
        metrics.confusion_matrix(scores, np.full((1, 2, 2), 2), 2)
    with pytest.raises(ArgumentError):
        metrics.confusion_matrix(scores, np.zeros((1, 2, 2)), 0)


def test_confusion_helpers():
    counts = np.array([[1, 1], [0, 2]])
    assert metrics.accuracy_from_confusion(counts) == 0.75
    assert metrics.iou_from_confusion(counts) == pytest.approx((0.5 + 2 / 3) / 2)
    empty = np.zeros((2, 2), dtype=int)
    assert metrics.accuracy_from_confusion(empty) == 0.0
    assert metrics.iou_from_confusion(empty) == 0.0


def test_summed_confusion_equals_whole_batch():
    labels = np.array([[[0, 1], [1, 1]], [[0, 0], [1, 0]]])
    scores = _scores_for([[[0, 1], [0, 1]], [[1, 0], [1, 0]]])
    whole = metrics.confusion_matrix(scores, labels, 2)
    parts = sum(metrics.confusion_matrix(Tensor(scores.data[i:i + 1]), labels[i:i + 1], 2) for i in range(2))
    np.testing.assert_array_equal(parts, whole)
    assert metrics.accuracy_from_confusion(whole) == metrics.pixel_accuracy(scores, labels)
    assert metrics.iou_from_confusion(whole) == metrics.mean_iou(scores, labels, 2)
