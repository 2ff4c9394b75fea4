"""Morton (Z-order) encoding and the token sequencer.

Bit ``i`` of the quantized x, y and z coordinates lands at code positions
``3i``, ``3i + 1`` and ``3i + 2`` respectively.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pointformer.core.errors import InvalidArgumentError, RangeError
from pointformer.geometry.pointcloud import PointCloud, bounding_box

DEFAULT_BITS = 10


@dataclass(frozen=True)
class MortonConfig:
    """Quantization grid: ``bits_per_axis`` bits over an axis-aligned box.

    An axis with ``box_min == box_max`` quantizes every point to 0.
    """

    bits_per_axis: int = DEFAULT_BITS
    box_min: np.ndarray = field(default_factory=lambda: np.full(3, -1.0, dtype=np.float32))
    box_max: np.ndarray = field(default_factory=lambda: np.full(3, 1.0, dtype=np.float32))

    def __post_init__(self) -> None:
        if not 1 <= self.bits_per_axis <= 21:
            raise RangeError(f"bits_per_axis must be in [1, 21], got {self.bits_per_axis}")
        lo = np.asarray(self.box_min, dtype=np.float32).reshape(3)
        hi = np.asarray(self.box_max, dtype=np.float32).reshape(3)
        if np.any(lo > hi):
            raise InvalidArgumentError(f"box min {lo.tolist()} exceeds max {hi.tolist()}")
        object.__setattr__(self, "box_min", lo)
        object.__setattr__(self, "box_max", hi)

    @classmethod
    def from_points(cls, points: np.ndarray, bits_per_axis: int = DEFAULT_BITS) -> MortonConfig:
        lo, hi = bounding_box(points)
        return cls(bits_per_axis, lo, hi)


def morton_encode(q: tuple[int, int, int], bits: int = DEFAULT_BITS) -> int:
    """Interleave one quantized triple into its Morton code."""
    if not 1 <= bits <= 21:
        raise RangeError(f"bits must be in [1, 21], got {bits}")
    limit = 1 << bits
    for axis, value in zip("xyz", q):
        if int(value) != value or not 0 <= value < limit:
            raise RangeError(f"{axis}={value} does not fit in {bits} bits")
    code = 0
    for i in range(bits):
        for axis in range(3):
            code |= ((int(q[axis]) >> i) & 1) << (3 * i + axis)
    return code


def morton_encode_array(q: np.ndarray, bits: int = DEFAULT_BITS) -> np.ndarray:
    """Vectorized :func:`morton_encode` over an (M, 3) integer array."""
    grid = np.asarray(q)
    if grid.ndim != 2 or grid.shape[1] != 3:
        raise InvalidArgumentError(f"expected (M, 3) quantized coordinates, got {grid.shape}")
    if grid.size and (grid.min() < 0 or grid.max() >= (1 << bits)):
        raise RangeError(f"quantized coordinates do not fit in {bits} bits")
    grid = grid.astype(np.uint64)
    codes = np.zeros(grid.shape[0], dtype=np.uint64)
    one = np.uint64(1)
    for i in range(bits):
        for axis in range(3):
            bit = (grid[:, axis] >> np.uint64(i)) & one
            codes |= bit << np.uint64(3 * i + axis)
    return codes


def quantize(points: np.ndarray, config: MortonConfig) -> np.ndarray:
    """Map coordinates onto the integer grid, clamping to ``[0, 2^B - 1]``."""
    pts = np.asarray(points, dtype=np.float64)
    lo = config.box_min.astype(np.float64)
    extent = config.box_max.astype(np.float64) - lo
    top = float((1 << config.bits_per_axis) - 1)
    safe = np.where(extent > 0.0, extent, 1.0)
    scaled = np.floor((pts - lo) / safe * top)
    scaled = np.where(extent > 0.0, scaled, 0.0)
    return np.clip(scaled, 0.0, top).astype(np.int64)


def morton_codes(points: np.ndarray, config: MortonConfig) -> np.ndarray:
    return morton_encode_array(quantize(points, config), config.bits_per_axis)


def morton_order(
    cloud: PointCloud,
    centroid_indices: np.ndarray,
    config: MortonConfig | None = None,
) -> np.ndarray:
    """Permutation sorting the centroids by ascending Morton code.

    Equal codes keep their original relative order.
    """
    config = config or MortonConfig()
    centroids = cloud.points[np.asarray(centroid_indices, dtype=np.int64)]
    return np.argsort(morton_codes(centroids, config), kind="stable").astype(np.int64)


def _check_permutation(order: np.ndarray, length: int) -> np.ndarray:
    perm = np.asarray(order, dtype=np.int64)
    if perm.shape != (length,):
        raise InvalidArgumentError(f"order has length {perm.shape[0]}, sequence has {length}")
    if length and not np.array_equal(np.sort(perm), np.arange(length)):
        raise InvalidArgumentError("order is not a permutation")
    return perm


def apply_order(sequence: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Gather rows: ``out[i] = sequence[order[i]]``."""
    seq = np.asarray(sequence)
    return seq[_check_permutation(order, seq.shape[0])]


def inverse_permutation(order: np.ndarray) -> np.ndarray:
    perm = np.asarray(order, dtype=np.int64)
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.shape[0], dtype=np.int64)
    return inverse


def apply_inverse_order(sequence: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Scatter rows back: ``out[order[i]] = sequence[i]``."""
    seq = np.asarray(sequence)
    perm = _check_permutation(order, seq.shape[0])
    return seq[inverse_permutation(perm)]
