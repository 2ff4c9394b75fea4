"""PointFormer model: point embedding, frozen backbone with adapters, task heads."""

from pointformer.model.backbone import (
    AdapterParams,
    BackboneWeights,
    BlockWeights,
    EncodeResult,
    TokenSequence,
    adapter_parameter_count,
    encode,
    frozen_parameter_count,
    init_adapters,
    pointformer_block,
    vanilla_block,
)
from pointformer.model.embed import (
    PointEmbedNet,
    build_point_embed,
    init_random_frozen,
    point_embed_forward,
)
from pointformer.model.heads import (
    ClassifierHead,
    SegmentationHead,
    build_classifier,
    build_segmentation_head,
    default_taps,
    segment_forward,
)
from pointformer.model.pipeline import (
    PointFormerModel,
    PreparedSample,
    trainable_parameter_count,
)

__all__ = [
    "AdapterParams",
    "BackboneWeights",
    "BlockWeights",
    "ClassifierHead",
    "EncodeResult",
    "PointEmbedNet",
    "PointFormerModel",
    "PreparedSample",
    "SegmentationHead",
    "TokenSequence",
    "adapter_parameter_count",
    "build_classifier",
    "build_point_embed",
    "build_segmentation_head",
    "default_taps",
    "encode",
    "frozen_parameter_count",
    "init_adapters",
    "init_random_frozen",
    "point_embed_forward",
    "pointformer_block",
    "segment_forward",
    "trainable_parameter_count",
    "vanilla_block",
]
