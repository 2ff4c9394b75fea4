"""Task heads: linear classifier over the class token and the dense segmentation head."""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from pointformer.autodiff import ops
from pointformer.autodiff.tensor import Tensor
from pointformer.core.errors import ConfigError, InvalidArgumentError
from pointformer.geometry.morton import inverse_permutation
from pointformer.geometry.pointcloud import GroupedPoints, PointCloud
from pointformer.model.params import constant, kaiming_uniform, truncated_normal

INTERPOLATION_NEIGHBORS = 3
INTERPOLATION_EPS = 1e-8


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


@dataclass
class ClassifierHead:
    weight: Tensor
    bias: Tensor

    @property
    def num_classes(self) -> int:
        return int(self.weight.shape[1])

    def named_parameters(self, prefix: str = "head") -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias


def build_classifier(seed: int, d: int, num_classes: int) -> ClassifierHead:
    if num_classes < 2:
        raise ConfigError("a classifier needs at least 2 classes")
    rng = np.random.default_rng(seed)
    return ClassifierHead(
        weight=truncated_normal(rng, (d, num_classes), 0.02, "head.weight", trainable=True),
        bias=constant(0.0, (num_classes,), "head.bias", trainable=True),
    )


def classify_logits(head: ClassifierHead, cls: Tensor) -> Tensor:
    """logits = cls · W + b for a (d,) or (B, d) class token."""
    return ops.linear(cls, head.weight, head.bias)


def class_probabilities(logits: Tensor) -> Tensor:
    return ops.row_softmax(logits)


def cross_entropy_loss(logits: Tensor, label: int | np.ndarray) -> Tensor:
    labels = np.asarray(label, dtype=np.int64)
    n_classes = logits.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise InvalidArgumentError(f"label {label} out of range for {n_classes} classes")
    return ops.cross_entropy_with_logits(logits, labels)


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------


def default_taps(depth: int) -> tuple[int, ...]:
    """Blocks at one third, two thirds and the full depth (1-based, deduplicated)."""
    return tuple(sorted({max(1, depth // 3), max(1, 2 * depth // 3), depth}))


@dataclass
class SegmentationHead:
    taps: tuple[int, ...]
    fusion_weights: list[Tensor]
    fusion_biases: list[Tensor]
    point_weights: list[Tensor]
    point_biases: list[Tensor]

    @property
    def num_parts(self) -> int:
        return int(self.point_weights[-1].shape[1])

    def named_parameters(self, prefix: str = "seg_head") -> Iterator[tuple[str, Tensor]]:
        for i, (w, b) in enumerate(zip(self.fusion_weights, self.fusion_biases)):
            yield f"{prefix}.fusion{i}.weight", w
            yield f"{prefix}.fusion{i}.bias", b
        for i, (w, b) in enumerate(zip(self.point_weights, self.point_biases)):
            yield f"{prefix}.point{i}.weight", w
            yield f"{prefix}.point{i}.bias", b


def build_segmentation_head(
    seed: int,
    d: int,
    depth: int,
    num_parts: int,
    taps: Sequence[int] | None = None,
    fusion_widths: Sequence[int] = (256,),
    point_widths: Sequence[int] = (128,),
) -> SegmentationHead:
    chosen = tuple(taps) if taps is not None else default_taps(depth)
    if not chosen or list(chosen) != sorted(set(chosen)) or chosen[0] < 1 or chosen[-1] > depth:
        raise ConfigError(f"taps {chosen} must be strictly increasing within [1, {depth}]")
    rng = np.random.default_rng(seed)

    def stack(prefix: str, widths: list[int]) -> tuple[list[Tensor], list[Tensor]]:
        weights, biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            name = f"seg_head.{prefix}{i}"
            weights.append(kaiming_uniform(rng, fan_in, (fan_in, fan_out), f"{name}.weight", True))
            biases.append(constant(0.0, (fan_out,), f"{name}.bias", True))
        return weights, biases

    fusion_w, fusion_b = stack("fusion", [d * len(chosen), *fusion_widths])
    fused = fusion_widths[-1] if fusion_widths else d * len(chosen)
    point_w, point_b = stack("point", [fused + d + 3, *point_widths, num_parts])
    return SegmentationHead(chosen, fusion_w, fusion_b, point_w, point_b)


def interpolation_weights(
    points: np.ndarray,
    centroids: np.ndarray,
    neighbors: int = INTERPOLATION_NEIGHBORS,
) -> np.ndarray:
    """Dense (N, N_s) inverse-distance-squared weights over each point's nearest centroids.

    Rows are non-negative and sum to 1; distance ties go to the smaller centroid index.
    """
    pts = np.asarray(points, dtype=np.float64)
    ctr = np.asarray(centroids, dtype=np.float64)
    d2 = ((pts[:, None, :] - ctr[None, :, :]) ** 2).sum(axis=2)
    m = min(neighbors, ctr.shape[0])
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :m]
    w = 1.0 / (np.take_along_axis(d2, nearest, axis=1) + INTERPOLATION_EPS)
    w /= w.sum(axis=1, keepdims=True)
    dense = np.zeros_like(d2)
    np.put_along_axis(dense, nearest, w, axis=1)
    return dense.astype(np.float32)


def _mlp(x: Tensor, weights: list[Tensor], biases: list[Tensor], final_relu: bool) -> Tensor:
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        x = ops.linear(x, w, b)
        if i < last or final_relu:
            x = ops.relu(x)
    return x


def segment_forward(
    head: SegmentationHead,
    per_block_sequences: Sequence[Tensor],
    grouped: GroupedPoints | Sequence[GroupedPoints],
    cloud: PointCloud | Sequence[PointCloud],
) -> Tensor:
    """Per-point part logits, (N, num_parts) or (B, N, num_parts) for batches.

    *per_block_sequences* holds every block's output (index l-1 for block l),
    tokens in the Morton order recorded on *grouped*.
    """
    if len(per_block_sequences) < max(head.taps):
        raise ConfigError(
            f"segmentation taps {head.taps} need {max(head.taps)} captured blocks, "
            f"got {len(per_block_sequences)}"
        )
    batched = not isinstance(grouped, GroupedPoints)
    groups = list(grouped) if batched else [grouped]
    clouds = list(cloud) if batched else [cloud]
    if len(groups) != len(clouds):
        raise InvalidArgumentError("grouped and cloud batches differ in length")
    n_points = {len(c) for c in clouds}
    if len(n_points) != 1:
        raise InvalidArgumentError(f"a segmentation batch needs equal point counts, got {n_points}")

    # Sequence position 0 is the class token, so centroid j sits at 1 + inverse[j].
    lookup = np.stack([inverse_permutation(g.order) + 1 for g in groups])
    weights = np.stack(
        [
            interpolation_weights(c.points, c.points[g.centroid_indices])
            for g, c in zip(groups, clouds)
        ]
    )
    xyz = np.stack([c.points for c in clouds])
    if not batched:
        lookup, weights, xyz = lookup[0], weights[0], xyz[0]

    taps = [ops.embedding_lookup(per_block_sequences[t - 1], lookup) for t in head.taps]
    stacked = ops.concat_lastdim(*taps) if len(taps) > 1 else taps[0]
    fused = _mlp(stacked, head.fusion_weights, head.fusion_biases, final_relu=True)
    propagated = ops.matmul(Tensor(weights), fused)

    final_tokens = ops.embedding_lookup(per_block_sequences[-1], lookup)
    pooled = ops.mean_over_axis(final_tokens, axis=-2)
    d = pooled.shape[-1]
    pooled = ops.reshape(pooled, (*pooled.shape[:-1], 1, d))
    spread = ops.matmul(Tensor(np.ones((xyz.shape[-2], 1))), pooled)

    point_features = ops.concat_lastdim(propagated, spread, Tensor(xyz))
    return _mlp(point_features, head.point_weights, head.point_biases, final_relu=False)


def segment_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean per-point cross-entropy."""
    return cross_entropy_loss(logits, np.asarray(labels, dtype=np.int64))
