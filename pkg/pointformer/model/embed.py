"""Point embedding: a shared per-point MLP max-pooled over each k-neighborhood.

Every group member is featurized as (xyz, features, xyz - centroid xyz). The
RPN variant is the same net left at its seeded random init and frozen.
"""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from pointformer.autodiff import ops
from pointformer.autodiff.tensor import Tensor
from pointformer.core.errors import ConfigError, ShapeError
from pointformer.geometry.pointcloud import GroupedPoints, PointCloud
from pointformer.model.params import constant, kaiming_uniform

DEFAULT_HIDDEN = (64, 128)


def input_width_for(feature_channels: int) -> int:
    return 3 + feature_channels + 3


@dataclass
class PointEmbedNet:
    weights: list[Tensor]
    biases: list[Tensor]
    trainable: bool

    @property
    def input_width(self) -> int:
        return int(self.weights[0].shape[0])

    @property
    def out_width(self) -> int:
        return int(self.weights[-1].shape[1])

    def named_parameters(self, prefix: str = "embed") -> Iterator[tuple[str, Tensor]]:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            yield f"{prefix}.fc{i}.weight", w
            yield f"{prefix}.fc{i}.bias", b


def build_point_embed(
    seed: int,
    d: int,
    feature_channels: int = 0,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    trainable: bool = True,
) -> PointEmbedNet:
    """Kaiming-uniform weights and zero biases for widths [input → *hidden → d]."""
    rng = np.random.default_rng(seed)
    widths = [input_width_for(feature_channels), *hidden, d]
    weights: list[Tensor] = []
    biases: list[Tensor] = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        weights.append(
            kaiming_uniform(rng, fan_in, (fan_in, fan_out), f"embed.fc{i}.weight", trainable)
        )
        biases.append(constant(0.0, (fan_out,), f"embed.fc{i}.bias", trainable))
    return PointEmbedNet(weights=weights, biases=biases, trainable=trainable)


def init_random_frozen(
    seed: int,
    d: int,
    feature_channels: int = 0,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
) -> PointEmbedNet:
    """The RPN embedding: seeded random weights, every tensor frozen."""
    return build_point_embed(seed, d, feature_channels, hidden, trainable=False)


def featurize_groups(cloud: PointCloud, grouped: GroupedPoints) -> np.ndarray:
    """(N_s, k, 3 + C + 3) member features in centroid (pre-sequencing) order."""
    members = cloud.points[grouped.groups]
    centers = cloud.points[grouped.centroid_indices][:, None, :]
    parts = [members]
    if cloud.features is not None:
        parts.append(cloud.features[grouped.groups])
    parts.append(members - centers)
    return np.concatenate(parts, axis=-1).astype(np.float32)


def embed_features(net: PointEmbedNet, features: Tensor | np.ndarray) -> Tensor:
    """Run the shared MLP over (..., k, F) member features and max-pool over k."""
    x = features if isinstance(features, Tensor) else Tensor(features)
    if x.shape[-1] != net.input_width:
        raise ConfigError(
            f"embedding expects {net.input_width} input channels, got {x.shape[-1]}"
        )
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        x = ops.linear(x, w, b)
        if i < last:
            x = ops.relu(x)
    return ops.max_over_axis(x, axis=-2)


def point_embed_forward(
    net: PointEmbedNet,
    cloud: PointCloud,
    grouped: GroupedPoints,
    d: int | None = None,
) -> Tensor:
    """One d-dimensional token per group, row i for centroid i."""
    if d is not None and net.out_width != d:
        raise ConfigError(f"embedding width {net.out_width} does not match backbone width {d}")
    if grouped.groups.ndim != 2 or grouped.groups.shape[0] != grouped.n_groups:
        raise ShapeError(f"groups must be (N_s, k), got {grouped.groups.shape}")
    return embed_features(net, featurize_groups(cloud, grouped))
