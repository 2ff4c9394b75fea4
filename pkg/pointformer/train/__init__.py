"""Optimization, evaluation and the few-shot protocol."""

from pointformer.train.fewshot import Episode, FewShotResult, run_fewshot, sample_fewshot_episode
from pointformer.train.metrics import (
    Metrics,
    accuracy,
    instance_part_ious,
    segmentation_metrics,
)
from pointformer.train.optim import AdamState, adamw_step, cosine_lr, decay_mask
from pointformer.train.trainer import (
    EpochRecord,
    History,
    evaluate,
    prepare_dataset,
    train_classifier,
    train_segmenter,
)

__all__ = [
    "AdamState",
    "EpochRecord",
    "Episode",
    "FewShotResult",
    "History",
    "Metrics",
    "accuracy",
    "adamw_step",
    "cosine_lr",
    "decay_mask",
    "evaluate",
    "instance_part_ious",
    "prepare_dataset",
    "run_fewshot",
    "sample_fewshot_episode",
    "segmentation_metrics",
    "train_classifier",
    "train_segmenter",
]
