"""Classification accuracy and part-segmentation IoU metrics."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from pointformer.core.errors import InvalidArgumentError


@dataclass
class Metrics:
    task: str
    accuracy: float
    per_part_iou: dict[int, float] = field(default_factory=dict)
    miou_class: float | None = None
    miou_instance: float | None = None
    samples: int = 0

    def as_record(self) -> dict:
        record: dict = {"task": self.task, "samples": self.samples, "accuracy": self.accuracy}
        if self.task == "segmentation":
            record["miou_class"] = self.miou_class
            record["miou_instance"] = self.miou_instance
            record["per_part_iou"] = {str(k): v for k, v in sorted(self.per_part_iou.items())}
        return record


def accuracy(predicted: np.ndarray, labels: np.ndarray) -> float:
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if predicted.shape != labels.shape:
        raise InvalidArgumentError(
            f"prediction shape {predicted.shape} != label shape {labels.shape}"
        )
    if labels.size == 0:
        raise InvalidArgumentError("accuracy of an empty set is undefined")
    return float(np.mean(predicted == labels))


def instance_part_ious(predicted: np.ndarray, labels: np.ndarray) -> dict[int, float]:
    """IoU of every part present in the prediction or the ground truth of one instance."""
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if predicted.shape != labels.shape:
        raise InvalidArgumentError(
            f"prediction shape {predicted.shape} != label shape {labels.shape}"
        )
    ious: dict[int, float] = {}
    for part in np.union1d(np.unique(predicted), np.unique(labels)):
        pred_mask = predicted == part
        true_mask = labels == part
        union = np.count_nonzero(pred_mask | true_mask)
        ious[int(part)] = np.count_nonzero(pred_mask & true_mask) / union
    return ious


def segmentation_metrics(
    predicted: Sequence[np.ndarray], labels: Sequence[np.ndarray]
) -> tuple[dict[int, float], float, float]:
    """(per-part IoU, mIoU over part classes, mIoU over instances).

    A part absent from both prediction and ground truth of an instance is
    skipped for that instance.
    """
    if len(predicted) != len(labels) or not labels:
        raise InvalidArgumentError("segmentation metrics need equally many non-empty instances")
    per_part: dict[int, list[float]] = {}
    instance_means = []
    for pred, true in zip(predicted, labels):
        ious = instance_part_ious(pred, true)
        instance_means.append(float(np.mean(list(ious.values()))))
        for part, iou in ious.items():
            per_part.setdefault(part, []).append(iou)
    per_part_iou = {part: float(np.mean(vals)) for part, vals in sorted(per_part.items())}
    miou_class = float(np.mean(list(per_part_iou.values())))
    return per_part_iou, miou_class, float(np.mean(instance_means))
