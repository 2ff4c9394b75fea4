"""Model assembly: geometry, embedding, sequencer, backbone and heads in one object."""

from __future__ import annotations

import logging
from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from pointformer.autodiff import ops
from pointformer.autodiff.tensor import Tensor
from pointformer.core.config import PointFormerConfig
from pointformer.core.errors import ConfigError, InvalidArgumentError
from pointformer.geometry.pointcloud import GroupedPoints, PointCloud, normalize_unit_sphere
from pointformer.geometry.sampling import group_points, resample
from pointformer.model.backbone import (
    AdapterParams,
    BackboneWeights,
    EncodeResult,
    adapter_parameter_count,
    encode,
    init_adapters,
)
from pointformer.model.embed import (
    PointEmbedNet,
    build_point_embed,
    embed_features,
    featurize_groups,
    init_random_frozen,
    input_width_for,
)
from pointformer.model.heads import (
    ClassifierHead,
    SegmentationHead,
    build_classifier,
    build_segmentation_head,
    classify_logits,
    cross_entropy_loss,
    default_taps,
    segment_forward,
    segment_loss,
)

logger = logging.getLogger(__name__)


def _dense_stack_count(widths: Sequence[int]) -> int:
    return sum(fan_in * fan_out + fan_out for fan_in, fan_out in zip(widths[:-1], widths[1:]))


def trainable_parameter_count(config: PointFormerConfig) -> int:
    """Analytic size of everything training moves: embed net, adapters and task head.

    The RPN embedding is frozen and contributes nothing. Adapters count both
    bottleneck matrices and their LayerNorm gain and bias.
    """
    geo, bb, heads = config.geometry, config.backbone, config.heads
    d = bb.width
    total = 0
    if config.embed.is_trainable:
        total += _dense_stack_count(
            [input_width_for(geo.feature_channels), *config.embed.hidden, d]
        )
    if bb.use_adapters:
        total += adapter_parameter_count(bb) + bb.depth * 2 * d
    if heads.task == "classification":
        return total + d * heads.num_classes + heads.num_classes
    taps = heads.taps if heads.taps is not None else default_taps(bb.depth)
    fusion = [d * len(taps), *heads.fusion_widths]
    total += _dense_stack_count(fusion)
    return total + _dense_stack_count([fusion[-1] + d + 3, *heads.point_widths, heads.num_parts])


def _fresh_trainables(
    config: PointFormerConfig, d: int, seed: int
) -> tuple[PointEmbedNet, list[AdapterParams] | None, ClassifierHead | SegmentationHead]:
    """Embed net, adapters and task head drawn from *seed*.

    The RPN embedding always comes from ``embed.seed`` so every run shares it.
    """
    geo, bb, heads = config.geometry, config.backbone, config.heads
    if config.embed.is_trainable:
        embed = build_point_embed(seed, d, geo.feature_channels, config.embed.hidden, True)
    else:
        embed = init_random_frozen(config.embed.seed, d, geo.feature_channels, config.embed.hidden)
    adapters = init_adapters(bb, seed + 1) if bb.use_adapters else None
    head: ClassifierHead | SegmentationHead
    if heads.task == "classification":
        head = build_classifier(seed + 2, d, heads.num_classes)
    else:
        head = build_segmentation_head(
            seed + 2,
            d,
            bb.depth,
            heads.num_parts,
            heads.taps,
            heads.fusion_widths,
            heads.point_widths,
        )
    logger.debug("initialized trainable parts from seed %d", seed)
    return embed, adapters, head


@dataclass
class PreparedSample:
    """A normalized cloud with its grouping and embedding input, computed once."""

    cloud: PointCloud
    grouped: GroupedPoints
    features: np.ndarray
    label: int | None = None
    part_labels: np.ndarray | None = None


class PointFormerModel:
    """Frozen backbone plus the trainable embed net, adapters and task head."""

    def __init__(
        self,
        config: PointFormerConfig,
        backbone: BackboneWeights,
        embed: PointEmbedNet,
        adapters: list[AdapterParams] | None,
        head: ClassifierHead | SegmentationHead,
    ) -> None:
        if backbone.width != config.backbone.width:
            raise ConfigError(
                f"backbone width {backbone.width} does not match config width "
                f"{config.backbone.width}"
            )
        if embed.out_width != backbone.width:
            raise ConfigError(
                f"embedding width {embed.out_width} does not match backbone width {backbone.width}"
            )
        if len(backbone.blocks) != config.backbone.depth:
            raise ConfigError(
                f"backbone has {len(backbone.blocks)} blocks, config says {config.backbone.depth}"
            )
        self.config = config
        self.backbone = backbone
        self.embed = embed
        self.adapters = adapters
        self.head = head

    @classmethod
    def build(
        cls, config: PointFormerConfig, backbone: BackboneWeights, seed: int | None = None
    ) -> PointFormerModel:
        """Fresh trainable parts on top of *backbone*; ablation switches come from *config*."""
        config.validate()
        seed = config.train.seed if seed is None else seed
        embed, adapters, head = _fresh_trainables(config, backbone.width, seed)
        return cls(config, backbone, embed, adapters, head)

    @property
    def task(self) -> str:
        return self.config.heads.task

    def reinitialize(self, seed: int) -> None:
        """Draw new adapters and head (and a new embed net unless it is the frozen RPN)."""
        self.embed, self.adapters, self.head = _fresh_trainables(
            self.config, self.backbone.width, seed
        )

    # -- parameters ---------------------------------------------------------

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield from self.embed.named_parameters("embed")
        yield from self.backbone.named_parameters()
        for i, adapter in enumerate(self.adapters or []):
            yield from adapter.named_parameters(f"adapters.{i}")
        yield from self.head.named_parameters(
            "head" if isinstance(self.head, ClassifierHead) else "seg_head"
        )

    def trainable_parameters(self) -> list[tuple[str, Tensor]]:
        return [(n, p) for n, p in self.named_parameters() if p.requires_grad]

    def frozen_parameters(self) -> list[tuple[str, Tensor]]:
        return [(n, p) for n, p in self.named_parameters() if not p.requires_grad]

    # -- data ---------------------------------------------------------------

    def prepare(
        self,
        cloud: PointCloud,
        label: int | None = None,
        part_labels: np.ndarray | None = None,
    ) -> PreparedSample:
        """Resample to ``n_points``, normalize, group and sequence *cloud*.

        ``n_points = 0`` keeps every point as given.
        """
        geo = self.config.geometry
        if cloud.feature_channels != geo.feature_channels:
            raise ConfigError(
                f"cloud has {cloud.feature_channels} feature channels, "
                f"config expects {geo.feature_channels}"
            )
        if part_labels is not None:
            part_labels = np.asarray(part_labels, dtype=np.int64)
            if part_labels.shape != (len(cloud),):
                raise InvalidArgumentError(
                    f"part labels must have shape ({len(cloud)},), got {part_labels.shape}"
                )
        if geo.n_points and len(cloud) != geo.n_points:
            indices = resample(cloud, geo.n_points)
            cloud = cloud.take(indices)
            if part_labels is not None:
                part_labels = part_labels[indices]
        normalized = normalize_unit_sphere(cloud)
        grouped = group_points(
            normalized, geo.n_groups, geo.k, geo.bits_per_axis, sequencer=geo.sequencer
        )
        return PreparedSample(
            cloud=normalized,
            grouped=grouped,
            features=featurize_groups(normalized, grouped),
            label=label,
            part_labels=part_labels,
        )

    # -- forward ------------------------------------------------------------

    def ordered_tokens(self, batch: Sequence[PreparedSample]) -> Tensor:
        """Embedded tokens (B, N_s, d), gathered into each sample's Morton order."""
        if not batch:
            raise InvalidArgumentError("empty batch")
        shapes = {s.features.shape for s in batch}
        if len(shapes) != 1:
            raise InvalidArgumentError(f"a batch needs equal group shapes, got {sorted(shapes)}")
        tokens = embed_features(self.embed, np.stack([s.features for s in batch]))
        orders = np.stack([s.grouped.order for s in batch])
        return ops.embedding_lookup(tokens, orders)

    def encode_batch(self, batch: Sequence[PreparedSample], capture: bool = False) -> EncodeResult:
        return encode(
            self.config.backbone,
            self.backbone,
            self.adapters,
            self.ordered_tokens(batch),
            capture=capture,
        )

    def forward_classify(self, batch: Sequence[PreparedSample]) -> Tensor:
        """(B, num_classes) logits from the final class token."""
        if not isinstance(self.head, ClassifierHead):
            raise ConfigError("model was built for segmentation, not classification")
        final = self.encode_batch(batch).final
        cls = ops.embedding_lookup(final, np.zeros((len(batch), 1), dtype=np.int64))
        cls = ops.reshape(cls, (len(batch), self.backbone.width))
        return classify_logits(self.head, cls)

    def forward_segment(self, batch: Sequence[PreparedSample]) -> Tensor:
        """(B, N, num_parts) per-point logits."""
        if not isinstance(self.head, SegmentationHead):
            raise ConfigError("model was built for classification, not segmentation")
        result = self.encode_batch(batch, capture=True)
        return segment_forward(
            self.head,
            result.intermediates,
            [s.grouped for s in batch],
            [s.cloud for s in batch],
        )

    def forward(self, batch: Sequence[PreparedSample]) -> Tensor:
        if self.task == "classification":
            return self.forward_classify(batch)
        return self.forward_segment(batch)

    def loss(self, batch: Sequence[PreparedSample]) -> tuple[Tensor, Tensor]:
        """Return (loss, logits) for the model's task."""
        logits = self.forward(batch)
        if self.task == "classification":
            if any(s.label is None for s in batch):
                raise InvalidArgumentError("classification batch contains unlabeled samples")
            labels = np.array([s.label for s in batch], dtype=np.int64)
            return cross_entropy_loss(logits, labels), logits
        if any(s.part_labels is None for s in batch):
            raise InvalidArgumentError("segmentation batch contains samples without part labels")
        labels = np.stack([s.part_labels for s in batch])
        return segment_loss(logits, labels), logits

    def predict(self, batch: Sequence[PreparedSample]) -> np.ndarray:
        """Argmax labels: (B,) for classification, (B, N) for segmentation."""
        return np.argmax(self.forward(batch).data, axis=-1)
