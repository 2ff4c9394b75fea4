"""N-way K-shot episodes and the repeated few-shot protocol."""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from pointformer.core.config import EpisodeSpec, TrainConfig
from pointformer.core.errors import InvalidArgumentError
from pointformer.io.dataset import LabeledCloud
from pointformer.model.pipeline import PointFormerModel
from pointformer.train.trainer import evaluate, train_classifier

logger = logging.getLogger(__name__)


@dataclass
class Episode:
    """Train/test splits relabeled to 0..n_way-1 in the order of ``classes``."""

    index: int
    classes: tuple[int, ...]
    train: list[LabeledCloud]
    test: list[LabeledCloud]
    train_indices: np.ndarray
    test_indices: np.ndarray


@dataclass
class FewShotResult:
    accuracies: list[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        """Population standard deviation over repeats."""
        return float(np.std(self.accuracies))


def sample_fewshot_episode(
    dataset: Sequence[LabeledCloud], spec: EpisodeSpec, episode_index: int
) -> Episode:
    """Draw *n_way* classes, then k_shot train and test_per_class test samples from each.

    The generator is seeded by ``(spec.seed, episode_index)``.
    """
    spec.validate()
    labels = np.array(
        [-1 if s.label is None else s.label for s in dataset], dtype=np.int64
    )
    classes = np.unique(labels[labels >= 0])
    if classes.size < spec.n_way:
        raise InvalidArgumentError(
            f"{spec.n_way}-way episodes need {spec.n_way} classes, dataset has {classes.size}"
        )
    rng = np.random.default_rng([spec.seed, episode_index])
    chosen = np.sort(rng.choice(classes, size=spec.n_way, replace=False))
    needed = spec.k_shot + spec.test_per_class
    train_idx, test_idx = [], []
    for cls in chosen:
        members = np.flatnonzero(labels == cls)
        if members.size < needed:
            raise InvalidArgumentError(
                f"class {int(cls)} has {members.size} samples, "
                f"a {spec.k_shot}-shot episode needs {needed}"
            )
        members = rng.permutation(members)
        train_idx.append(members[: spec.k_shot])
        test_idx.append(members[spec.k_shot : needed])

    relabel = {int(c): i for i, c in enumerate(chosen)}

    def take(indices: np.ndarray) -> list[LabeledCloud]:
        return [
            LabeledCloud(
                cloud=dataset[i].cloud,
                label=relabel[int(labels[i])],
                name=dataset[i].name,
            )
            for i in indices
        ]

    train_all = np.concatenate(train_idx)
    test_all = np.concatenate(test_idx)
    return Episode(
        index=episode_index,
        classes=tuple(int(c) for c in chosen),
        train=take(train_all),
        test=take(test_all),
        train_indices=train_all,
        test_indices=test_all,
    )


def run_fewshot(
    build_model: Callable[[int], PointFormerModel],
    dataset: Sequence[LabeledCloud],
    spec: EpisodeSpec,
    train_config: TrainConfig,
) -> FewShotResult:
    """Train a fresh model per episode and aggregate test accuracy.

    *build_model(seed)* must return a model with ``n_way`` classes whose
    trainable parts are newly initialized; the frozen backbone may be shared.
    """
    result = FewShotResult()
    for repeat in range(spec.repeats):
        episode = sample_fewshot_episode(dataset, spec, repeat)
        model = build_model(train_config.seed + repeat)
        if model.config.heads.num_classes != spec.n_way:
            raise InvalidArgumentError(
                f"few-shot model has {model.config.heads.num_classes} classes, "
                f"episodes are {spec.n_way}-way"
            )
        train_classifier(model, episode.train, train_config)
        metrics = evaluate(model, episode.test, "classification")
        result.accuracies.append(metrics.accuracy)
        logger.info(
            "episode %d/%d classes=%s accuracy %.3f",
            repeat + 1,
            spec.repeats,
            list(episode.classes),
            metrics.accuracy,
        )
    return result
