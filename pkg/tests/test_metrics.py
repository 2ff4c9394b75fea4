"""Accuracy and part IoU metrics."""

from __future__ import annotations

import numpy as np
import pytest

from pointformer.core.errors import InvalidArgumentError
from pointformer.train.metrics import (
    Metrics,
    accuracy,
    instance_part_ious,
    segmentation_metrics,
)


class TestAccuracy:
    def test_fraction_correct(self):
        assert accuracy(np.array([0, 1, 2, 2]), np.array([0, 1, 1, 2])) == 0.75

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            accuracy(np.zeros(3), np.zeros(4))

    def test_empty(self):
        with pytest.raises(InvalidArgumentError):
            accuracy(np.zeros(0), np.zeros(0))


class TestPartIoU:
    def test_perfect_prediction(self):
        labels = np.array([0, 0, 1, 2, 2])
        per_part, miou_c, miou_i = segmentation_metrics([labels.copy()], [labels])
        assert per_part == {0: 1.0, 1: 1.0, 2: 1.0}
        assert miou_c == miou_i == 1.0

    def test_half_coverage(self):
        labels = np.array([0, 0, 0, 0, 1, 1, 1, 1])
        predicted = np.array([0, 0, 1, 1, 1, 1, 0, 0])
        ious = instance_part_ious(predicted, labels)
        assert ious[0] == pytest.approx(1 / 3)
        assert ious[1] == pytest.approx(1 / 3)

    def test_disjoint_prediction(self):
        assert instance_part_ious(np.array([1, 1]), np.array([0, 0])) == {0: 0.0, 1: 0.0}

    def test_absent_parts_are_skipped(self):
        ious = instance_part_ious(np.array([0, 3]), np.array([0, 3]))
        assert set(ious) == {0, 3}

    def test_class_and_instance_means_differ(self):
        preds = [np.array([0, 0, 1, 1]), np.array([2, 2])]
        truth = [np.array([0, 0, 1, 0]), np.array([2, 2])]
        per_part, miou_c, miou_i = segmentation_metrics(preds, truth)
        assert per_part == {0: pytest.approx(2 / 3), 1: 0.5, 2: 1.0}
        assert miou_c == pytest.approx((2 / 3 + 0.5 + 1.0) / 3)
        assert miou_i == pytest.approx(((2 / 3 + 0.5) / 2 + 1.0) / 2)

    def test_record_keys(self):
        record = Metrics("segmentation", 0.5, {1: 0.25}, 0.25, 0.3, 2).as_record()
        assert record["per_part_iou"] == {"1": 0.25}
        assert "miou_class" not in Metrics("classification", 0.9).as_record()
