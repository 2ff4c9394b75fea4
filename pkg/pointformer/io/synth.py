"""Seeded stand-in for a pretrained image transformer at desk scale."""

from __future__ import annotations

import numpy as np

from pointformer.core.config import BackboneConfig
from pointformer.model.backbone import BackboneWeights, BlockWeights
from pointformer.model.params import constant, truncated_normal

INIT_STD = 0.02


def synth_pretrained(seed: int, config: BackboneConfig) -> BackboneWeights:
    """Frozen weights with ViT init scales: projections ~ TN(0, 0.02), LN gains 1, biases 0."""
    config.validate()
    rng = np.random.default_rng(seed)
    d, hidden = config.width, config.mlp_hidden

    def proj(name: str, shape: tuple[int, ...]):
        return truncated_normal(rng, shape, INIT_STD, name)

    def zeros(name: str, n: int):
        return constant(0.0, (n,), name, trainable=False)

    def ones(name: str, n: int):
        return constant(1.0, (n,), name, trainable=False)

    blocks = []
    for i in range(config.depth):
        p = f"backbone.blocks.{i}"
        blocks.append(
            BlockWeights(
                heads=config.heads,
                ln1_gain=ones(f"{p}.ln1_gain", d),
                ln1_bias=zeros(f"{p}.ln1_bias", d),
                q_weight=proj(f"{p}.q_weight", (d, d)),
                q_bias=zeros(f"{p}.q_bias", d),
                k_weight=proj(f"{p}.k_weight", (d, d)),
                k_bias=zeros(f"{p}.k_bias", d),
                v_weight=proj(f"{p}.v_weight", (d, d)),
                v_bias=zeros(f"{p}.v_bias", d),
                out_weight=proj(f"{p}.out_weight", (d, d)),
                out_bias=zeros(f"{p}.out_bias", d),
                ln2_gain=ones(f"{p}.ln2_gain", d),
                ln2_bias=zeros(f"{p}.ln2_bias", d),
                fc1_weight=proj(f"{p}.fc1_weight", (d, hidden)),
                fc1_bias=zeros(f"{p}.fc1_bias", hidden),
                fc2_weight=proj(f"{p}.fc2_weight", (hidden, d)),
                fc2_bias=zeros(f"{p}.fc2_bias", d),
            )
        )
    return BackboneWeights(
        cls_token=proj("backbone.cls_token", (d,)),
        pos_embed=proj("backbone.pos_embed", (config.max_tokens, d)),
        blocks=blocks,
    )
