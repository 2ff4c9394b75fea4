"""Shared fixtures: a small model configuration, seeded clouds and a synthetic backbone."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np
import pytest

from pointformer.core.config import PointFormerConfig, default_config
from pointformer.geometry.pointcloud import PointCloud
from pointformer.io.synth import synth_pretrained
from pointformer.model.backbone import BackboneWeights


def small_config(task: str = "classification") -> PointFormerConfig:
    """Smaller than the tiny profile so unit tests run in milliseconds."""
    config = default_config("tiny")
    config.geometry.n_points = 64
    config.geometry.n_groups = 8
    config.geometry.k = 8
    config.backbone.depth = 2
    config.backbone.width = 16
    config.backbone.heads = 2
    config.backbone.d_hat = 4
    config.backbone.max_tokens = 17
    config.embed.hidden = (16,)
    config.heads.task = task
    config.heads.num_classes = 4
    config.heads.num_parts = 2
    config.heads.fusion_widths = (16,)
    config.heads.point_widths = (8,)
    config.train.epochs = 2
    config.train.batch_size = 4
    config.validate()
    return config


@pytest.fixture
def config() -> PointFormerConfig:
    return small_config()


@pytest.fixture
def seg_config() -> PointFormerConfig:
    return small_config("segmentation")


@pytest.fixture
def backbone(config: PointFormerConfig) -> BackboneWeights:
    return synth_pretrained(7, config.backbone)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def make_cloud(rng: np.random.Generator) -> Callable[[int], PointCloud]:
    def _make(n: int = 64) -> PointCloud:
        return PointCloud(rng.uniform(-1.0, 1.0, size=(n, 3)).astype(np.float32))

    return _make


@pytest.fixture
def make_config() -> Callable[..., PointFormerConfig]:
    return small_config
