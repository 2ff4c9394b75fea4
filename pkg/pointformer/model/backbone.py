"""Frozen ViT-style transformer stack with PointFormer bottleneck adapters.

Blocks use the pre-LN convention:

    x~  = x + MSA(LN1(x))
    out = x~ + MLP(LN2(x~)) + s * ReLU(LN_a(x~) @ W_enc) @ W_dec

With ``W_dec == 0`` (the initial state) or ``s == 0`` the adapted block is
bit-identical to the vanilla block.
"""

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np

from pointformer.autodiff import ops
from pointformer.autodiff.tensor import Tensor
from pointformer.core.config import BackboneConfig
from pointformer.core.errors import ConfigError, ShapeError
from pointformer.model.params import constant, kaiming_uniform


@dataclass
class BlockWeights:
    """Frozen parameters of one transformer block."""

    heads: int
    ln1_gain: Tensor
    ln1_bias: Tensor
    q_weight: Tensor
    q_bias: Tensor
    k_weight: Tensor
    k_bias: Tensor
    v_weight: Tensor
    v_bias: Tensor
    out_weight: Tensor
    out_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    fc1_weight: Tensor
    fc1_bias: Tensor
    fc2_weight: Tensor
    fc2_bias: Tensor

    TENSORS = (
        "ln1_gain", "ln1_bias", "q_weight", "q_bias", "k_weight", "k_bias", "v_weight",
        "v_bias", "out_weight", "out_bias", "ln2_gain", "ln2_bias", "fc1_weight", "fc1_bias",
        "fc2_weight", "fc2_bias",
    )  # fmt: skip

    @property
    def width(self) -> int:
        return int(self.q_weight.shape[0])

    def named_parameters(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for attr in self.TENSORS:
            yield f"{prefix}.{attr}", getattr(self, attr)


@dataclass
class AdapterParams:
    """Trainable bottleneck branch of one block: its own LN, W_enc (d×d̂), W_dec (d̂×d)."""

    w_enc: Tensor
    w_dec: Tensor
    ln_gain: Tensor
    ln_bias: Tensor

    def named_parameters(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.w_enc", self.w_enc
        yield f"{prefix}.w_dec", self.w_dec
        yield f"{prefix}.ln_gain", self.ln_gain
        yield f"{prefix}.ln_bias", self.ln_bias


@dataclass
class BackboneWeights:
    """The frozen pretrained stack: class token, positional table and L blocks."""

    cls_token: Tensor
    pos_embed: Tensor
    blocks: list[BlockWeights] = field(default_factory=list)

    @property
    def width(self) -> int:
        return int(self.cls_token.shape[-1])

    @property
    def max_tokens(self) -> int:
        return int(self.pos_embed.shape[0])

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield "backbone.cls_token", self.cls_token
        yield "backbone.pos_embed", self.pos_embed
        for i, block in enumerate(self.blocks):
            yield from block.named_parameters(f"backbone.blocks.{i}")


@dataclass
class TokenSequence:
    """Class token plus N_s ordered tokens, held as one (..., 1 + N_s, d) tensor."""

    x: Tensor

    @property
    def cls(self) -> np.ndarray:
        return self.x.data[..., 0, :]

    @property
    def tokens(self) -> np.ndarray:
        return self.x.data[..., 1:, :]

    def __len__(self) -> int:
        return int(self.x.shape[-2]) - 1


@dataclass
class EncodeResult:
    final: Tensor
    intermediates: list[Tensor] = field(default_factory=list)


def init_adapters(config: BackboneConfig, seed: int) -> list[AdapterParams]:
    """Kaiming-uniform W_enc, zero W_dec, unit/zero LN; the adapted model starts frozen-equal."""
    rng = np.random.default_rng(seed)
    d, d_hat = config.width, config.d_hat
    adapters = []
    for i in range(config.depth):
        prefix = f"adapters.{i}"
        adapters.append(
            AdapterParams(
                w_enc=kaiming_uniform(rng, d, (d, d_hat), f"{prefix}.w_enc", trainable=True),
                w_dec=constant(0.0, (d_hat, d), f"{prefix}.w_dec", trainable=True),
                ln_gain=constant(1.0, (d,), f"{prefix}.ln_gain", trainable=True),
                ln_bias=constant(0.0, (d,), f"{prefix}.ln_bias", trainable=True),
            )
        )
    return adapters


def _split_heads(x: Tensor, heads: int) -> list[Tensor]:
    width = x.shape[-1] // heads
    return [ops.slice_lastdim(x, h * width, (h + 1) * width) for h in range(heads)]


def multi_head_self_attention(
    block: BlockWeights,
    x: Tensor,
    attention_out: list[np.ndarray] | None = None,
) -> Tensor:
    """Scaled dot-product attention per head, heads concatenated then projected.

    When *attention_out* is given, each head's (…, n, n) probability matrix is
    appended to it.
    """
    d = x.shape[-1]
    if d != block.width:
        raise ShapeError(f"attention: token width {d} does not match block width {block.width}")
    if d % block.heads != 0:
        raise ShapeError(f"attention: width {d} not divisible by {block.heads} heads")
    scale = 1.0 / math.sqrt(d // block.heads)
    q = _split_heads(ops.linear(x, block.q_weight, block.q_bias), block.heads)
    k = _split_heads(ops.linear(x, block.k_weight, block.k_bias), block.heads)
    v = _split_heads(ops.linear(x, block.v_weight, block.v_bias), block.heads)
    outputs = []
    for qh, kh, vh in zip(q, k, v):
        scores = ops.scalar_mul(ops.matmul(qh, ops.transpose(kh)), scale)
        probs = ops.row_softmax(scores)
        if attention_out is not None:
            attention_out.append(probs.data)
        outputs.append(ops.matmul(probs, vh))
    merged = outputs[0] if len(outputs) == 1 else ops.concat_lastdim(*outputs)
    return ops.linear(merged, block.out_weight, block.out_bias)


def _mlp(block: BlockWeights, x: Tensor) -> Tensor:
    hidden = ops.gelu(ops.linear(x, block.fc1_weight, block.fc1_bias))
    return ops.linear(hidden, block.fc2_weight, block.fc2_bias)


def _attention_residual(block: BlockWeights, x: Tensor) -> Tensor:
    normed = ops.layer_norm(x, block.ln1_gain, block.ln1_bias)
    return ops.add(x, multi_head_self_attention(block, normed))


def vanilla_block(block: BlockWeights, x: Tensor) -> Tensor:
    """Frozen pre-LN block: x~ = x + MSA(LN1(x)); out = x~ + MLP(LN2(x~))."""
    mid = _attention_residual(block, x)
    return ops.add(mid, _mlp(block, ops.layer_norm(mid, block.ln2_gain, block.ln2_bias)))


def adapter_branch(adapter: AdapterParams, mid: Tensor) -> Tensor:
    """ReLU(LN_a(x~) @ W_enc) @ W_dec."""
    normed = ops.layer_norm(mid, adapter.ln_gain, adapter.ln_bias)
    return ops.matmul(ops.relu(ops.matmul(normed, adapter.w_enc)), adapter.w_dec)


def pointformer_block(block: BlockWeights, adapter: AdapterParams, s: float, x: Tensor) -> Tensor:
    """Vanilla block plus the scaled adapter branch on the post-attention stream."""
    d = x.shape[-1]
    if adapter.w_enc.shape[0] != d or adapter.w_dec.shape[1] != d:
        raise ShapeError(
            f"adapter shapes {adapter.w_enc.shape}/{adapter.w_dec.shape} do not match width {d}"
        )
    mid = _attention_residual(block, x)
    out = ops.add(mid, _mlp(block, ops.layer_norm(mid, block.ln2_gain, block.ln2_bias)))
    return ops.add(out, ops.scalar_mul(adapter_branch(adapter, mid), s))


def prepend_cls(weights: BackboneWeights, tokens: Tensor) -> Tensor:
    """[cls, tokens] along the token axis; cls is broadcast over any batch axes."""
    lead = tokens.shape[:-2]
    cls = Tensor(np.broadcast_to(weights.cls_token.data, (*lead, 1, weights.width)).copy())
    swapped = ops.concat_lastdim(ops.transpose(cls), ops.transpose(tokens))
    return ops.transpose(swapped)


def encode(
    config: BackboneConfig,
    weights: BackboneWeights,
    adapters: list[AdapterParams] | None,
    tokens: Tensor,
    capture: bool = False,
) -> EncodeResult:
    """Run the (optionally adapted) stack over Morton-ordered tokens.

    *tokens* is (N_s, d) or (B, N_s, d). With *capture* every block's output
    is returned in ``intermediates`` (index l-1 for block l).
    """
    n_tokens = tokens.shape[-2]
    if tokens.shape[-1] != weights.width:
        raise ShapeError(
            f"encode: token width {tokens.shape[-1]} != backbone width {weights.width}"
        )
    if config.use_pos_embed and n_tokens + 1 > weights.max_tokens:
        raise ConfigError(
            f"{n_tokens} tokens + cls exceed the positional capacity {weights.max_tokens}"
        )
    use_adapters = config.use_adapters and adapters is not None
    if use_adapters and len(adapters) != len(weights.blocks):
        raise ConfigError(f"{len(adapters)} adapters for {len(weights.blocks)} blocks")

    x = prepend_cls(weights, tokens)
    if config.use_pos_embed:
        x = ops.add(x, Tensor(weights.pos_embed.data[: n_tokens + 1]))
    result = EncodeResult(final=x)
    for i, block in enumerate(weights.blocks):
        if use_adapters:
            x = pointformer_block(block, adapters[i], config.scale, x)
        else:
            x = vanilla_block(block, x)
        if capture:
            result.intermediates.append(x)
    result.final = x
    return result


def frozen_parameter_count(config: BackboneConfig) -> int:
    """Analytic size of BackboneWeights: L blocks plus class token and positional table."""
    d, h = config.width, config.mlp_hidden
    per_block = 4 * (d * d + d) + (d * h + h) + (h * d + d) + 4 * d
    return config.depth * per_block + d + config.max_tokens * d


def adapter_parameter_count(config: BackboneConfig) -> int:
    """W_enc and W_dec over all blocks: L · 2 · d · d̂."""
    return config.depth * 2 * config.width * config.d_hat
