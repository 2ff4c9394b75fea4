"""AdamW with decoupled weight decay and the cosine-annealing learning rate."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from pointformer.autodiff.tensor import Tensor
from pointformer.core.errors import InvalidArgumentError, InvariantError


@dataclass
class AdamState:
    """First and second moment buffers, one pair per parameter, kept in float64."""

    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, params: Sequence[Tensor]) -> AdamState:
        return cls(
            m=[np.zeros(p.shape, dtype=np.float64) for p in params],
            v=[np.zeros(p.shape, dtype=np.float64) for p in params],
        )


def decay_mask(params: Sequence[Tensor]) -> list[bool]:
    """Weight decay applies to matrices only; LN gains and all biases are exempt."""
    return [p.data.ndim >= 2 for p in params]


def adamw_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray | None],
    state: AdamState,
    t: int,
    lr: float,
    weight_decay: float = 5e-2,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    decay: Sequence[bool] | None = None,
) -> None:
    """One in-place AdamW update at step *t* (1-based).

    p ← p − lr·wd·p − lr·m̂/(√v̂ + ε). Frozen tensors are skipped; a missing
    gradient still decays the parameter. Without *decay* every tensor decays.
    """
    if t < 1:
        raise InvalidArgumentError(f"adam step count must be >= 1, got {t}")
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise InvariantError(
            f"adamw: {len(params)} params, {len(grads)} grads, {len(state.m)} moment buffers"
        )
    decay = [True] * len(params) if decay is None else list(decay)
    beta1, beta2 = betas
    correction1 = 1.0 - beta1**t
    correction2 = 1.0 - beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if not p.requires_grad:
            continue
        m, v = state.m[i], state.v[i]
        if m.shape != p.shape or v.shape != p.shape:
            raise InvariantError(f"adamw: state shape {m.shape} does not match {p.shape}")
        value = p.data.astype(np.float64)
        if g is not None:
            if g.shape != p.shape:
                raise InvariantError(f"adamw: gradient shape {g.shape} does not match {p.shape}")
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * np.square(g, dtype=np.float64)
        update = (m / correction1) / (np.sqrt(v / correction2) + eps)
        wd = weight_decay if decay[i] else 0.0
        p.data = (value - lr * wd * value - lr * update).astype(p.data.dtype)


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float = 0.0) -> float:
    """lr_min + (lr_max − lr_min)·(1 + cos(π·step/total_steps))/2."""
    if total_steps <= 0:
        raise InvalidArgumentError(f"total_steps must be >= 1, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise InvalidArgumentError(f"step {step} outside [0, {total_steps}]")
    if step == 0:
        return lr_max
    if step == total_steps:
        return lr_min
    return lr_min + (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0
