"""Training loop: seeded shuffling, AdamW with a per-step cosine schedule."""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from pointformer.autodiff.tensor import Graph, backward, zero_grad
from pointformer.core.config import TrainConfig
from pointformer.core.errors import InvalidArgumentError
from pointformer.io.dataset import LabeledCloud
from pointformer.model.pipeline import PointFormerModel, PreparedSample
from pointformer.train.metrics import Metrics, accuracy, segmentation_metrics
from pointformer.train.optim import AdamState, adamw_step, cosine_lr, decay_mask

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    step: int
    loss: float
    accuracy: float
    lr: float


@dataclass
class History:
    """Per-epoch records; ``step`` is the cumulative optimizer step count."""

    task: str = "classification"
    records: list[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        if self.records and record.step < self.records[-1].step:
            raise InvalidArgumentError("history steps must not decrease")
        self.records.append(record)

    @property
    def final(self) -> EpochRecord | None:
        return self.records[-1] if self.records else None

    def to_lines(self) -> list[str]:
        return [json.dumps(asdict(r), sort_keys=True) for r in self.records]

    def write_history(self, path: str | Path) -> None:
        Path(path).write_text("".join(f"{line}\n" for line in self.to_lines()), encoding="utf-8")


def prepare_dataset(
    model: PointFormerModel, dataset: Sequence[LabeledCloud]
) -> list[PreparedSample]:
    """Group and sequence every sample once; geometry is fixed across epochs."""
    return [model.prepare(s.cloud, s.label, s.part_labels) for s in dataset]


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def _fit(
    model: PointFormerModel,
    dataset: Sequence[LabeledCloud],
    config: TrainConfig,
    on_epoch: Callable[[EpochRecord], None] | None,
) -> History:
    if not dataset:
        raise InvalidArgumentError("cannot train on an empty dataset")
    config.validate()
    prepared = prepare_dataset(model, dataset)
    named = model.trainable_parameters()
    params = [p for _, p in named]
    state = AdamState.zeros_like(params)
    decay = decay_mask(params)
    rng = np.random.default_rng(config.seed)
    steps_per_epoch = math.ceil(len(prepared) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    history = History(task=model.task)
    step = 0
    logger.info(
        "training %s: %d samples, %d trainable tensors, %d steps",
        model.task,
        len(prepared),
        len(params),
        total_steps,
    )
    for epoch in range(1, config.epochs + 1):
        losses, hits, seen = [], 0, 0
        lr = config.lr_max
        for indices in _batches(len(prepared), config.batch_size, rng):
            batch = [prepared[i] for i in indices]
            lr = cosine_lr(step, total_steps, config.lr_max, config.lr_min)
            zero_grad(params)
            with Graph() as graph:
                loss, logits = model.loss(batch)
            backward(graph, loss)
            step += 1
            adamw_step(
                params,
                [p.grad for p in params],
                state,
                step,
                lr,
                weight_decay=config.weight_decay,
                betas=config.betas,
                eps=config.adam_epsilon,
                decay=decay,
            )
            predicted = np.argmax(logits.data, axis=-1)
            truth = _targets(model.task, batch)
            hits += int(np.count_nonzero(predicted == truth))
            seen += truth.size
            losses.append(float(loss.data) * len(batch))
        record = EpochRecord(
            epoch=epoch,
            step=step,
            loss=sum(losses) / len(prepared),
            accuracy=hits / seen,
            lr=lr,
        )
        history.append(record)
        logger.info(
            "epoch %d/%d  loss %.4f  acc %.3f  lr %.2e",
            epoch,
            config.epochs,
            record.loss,
            record.accuracy,
            record.lr,
        )
        if on_epoch is not None:
            on_epoch(record)
    zero_grad(params)
    return history


def _targets(task: str, batch: Sequence[PreparedSample]) -> np.ndarray:
    if task == "classification":
        return np.array([s.label for s in batch], dtype=np.int64)
    return np.stack([s.part_labels for s in batch])


def train_classifier(
    model: PointFormerModel,
    dataset: Sequence[LabeledCloud],
    config: TrainConfig,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> History:
    """Fit the embed net, adapters and classifier head; the backbone stays frozen."""
    if model.task != "classification":
        raise InvalidArgumentError("train_classifier needs a classification model")
    if any(s.label is None for s in dataset):
        raise InvalidArgumentError("classification training needs a label on every sample")
    return _fit(model, dataset, config, on_epoch)


def train_segmenter(
    model: PointFormerModel,
    dataset: Sequence[LabeledCloud],
    config: TrainConfig,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> History:
    if model.task != "segmentation":
        raise InvalidArgumentError("train_segmenter needs a segmentation model")
    if any(s.part_labels is None for s in dataset):
        raise InvalidArgumentError("segmentation training needs part labels on every sample")
    return _fit(model, dataset, config, on_epoch)


def evaluate(
    model: PointFormerModel,
    dataset: Sequence[LabeledCloud],
    task: str | None = None,
    batch_size: int = 32,
) -> Metrics:
    """Overall accuracy, plus IoU figures for segmentation."""
    task = task or model.task
    if task != model.task:
        raise InvalidArgumentError(f"cannot evaluate a {model.task} model on a {task} task")
    if not dataset:
        raise InvalidArgumentError("cannot evaluate on an empty dataset")
    if task == "classification" and any(s.label is None for s in dataset):
        raise InvalidArgumentError("classification evaluation needs a label on every sample")
    if task == "segmentation" and any(s.part_labels is None for s in dataset):
        raise InvalidArgumentError("segmentation evaluation needs part labels on every sample")

    prepared = prepare_dataset(model, dataset)
    predictions = []
    for start in range(0, len(prepared), batch_size):
        predictions.extend(model.predict(prepared[start : start + batch_size]))
    if task == "classification":
        truth = np.array([s.label for s in prepared], dtype=np.int64)
        return Metrics(
            task=task,
            accuracy=accuracy(np.array(predictions), truth),
            samples=len(prepared),
        )
    truths = [s.part_labels for s in prepared]
    per_part, miou_c, miou_i = segmentation_metrics(predictions, truths)
    return Metrics(
        task=task,
        accuracy=accuracy(np.concatenate(predictions), np.concatenate(truths)),
        per_part_iou=per_part,
        miou_class=miou_c,
        miou_instance=miou_i,
        samples=len(prepared),
    )
