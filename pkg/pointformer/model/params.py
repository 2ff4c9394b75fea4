"""Parameter initializers shared by the embedding net, adapters and heads."""

from __future__ import annotations

import math

import numpy as np

from pointformer.autodiff.tensor import Tensor


def kaiming_uniform(
    rng: np.random.Generator, fan_in: int, shape: tuple[int, ...], name: str, trainable: bool
) -> Tensor:
    """U(-b, b) with b = sqrt(6 / fan_in), the ReLU gain form."""
    bound = math.sqrt(6.0 / fan_in)
    data = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    return Tensor(data, requires_grad=trainable, name=name, dtype=np.float32)


def truncated_normal(
    rng: np.random.Generator,
    shape: tuple[int, ...],
    std: float,
    name: str,
    trainable: bool = False,
) -> Tensor:
    """Normal(0, std) redrawn until every value lies within two standard deviations."""
    data = rng.normal(0.0, std, size=shape)
    outside = np.abs(data) > 2.0 * std
    while outside.any():
        data[outside] = rng.normal(0.0, std, size=int(outside.sum()))
        outside = np.abs(data) > 2.0 * std
    return Tensor(data.astype(np.float32), requires_grad=trainable, name=name, dtype=np.float32)


def constant(value: float, shape: tuple[int, ...], name: str, trainable: bool) -> Tensor:
    return Tensor(
        np.full(shape, value, dtype=np.float32),
        requires_grad=trainable,
        name=name,
        dtype=np.float32,
    )
