"""Seeded synthetic benchmarks: surface samples of simple solids."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from pointformer.core.errors import InvalidArgumentError
from pointformer.geometry.pointcloud import PointCloud
from pointformer.io.dataset import LabeledCloud

SHAPES = ("sphere", "cube", "cylinder", "torus")
JITTER = 0.01
TORUS_MAJOR = 1.0
TORUS_MINOR = 0.35


def _sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _cube(rng: np.random.Generator, n: int) -> np.ndarray:
    pts = rng.uniform(-1.0, 1.0, size=(n, 3))
    axis = rng.integers(0, 3, size=n)
    pts[np.arange(n), axis] = rng.choice([-1.0, 1.0], size=n)
    return pts


def _cylinder(rng: np.random.Generator, n: int) -> np.ndarray:
    # Radius 1, height 2: the side carries 4π of the 6π surface area.
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    on_side = rng.uniform(size=n) < 2.0 / 3.0
    radius = np.where(on_side, 1.0, np.sqrt(rng.uniform(size=n)))
    z = np.where(on_side, rng.uniform(-1.0, 1.0, size=n), rng.choice([-1.0, 1.0], size=n))
    return np.stack([radius * np.cos(theta), radius * np.sin(theta), z], axis=1)


def _torus(rng: np.random.Generator, n: int) -> np.ndarray:
    out = np.empty((0, 3))
    while out.shape[0] < n:
        u = rng.uniform(0.0, 2.0 * np.pi, size=2 * n)
        v = rng.uniform(0.0, 2.0 * np.pi, size=2 * n)
        # Area-uniform acceptance on the tube angle.
        keep = rng.uniform(size=2 * n) < (TORUS_MAJOR + TORUS_MINOR * np.cos(v)) / (
            TORUS_MAJOR + TORUS_MINOR
        )
        ring = TORUS_MAJOR + TORUS_MINOR * np.cos(v[keep])
        pts = np.stack(
            [ring * np.cos(u[keep]), ring * np.sin(u[keep]), TORUS_MINOR * np.sin(v[keep])], axis=1
        )
        out = np.concatenate([out, pts])
    return out[:n]


_SAMPLERS: dict[str, Callable[[np.random.Generator, int], np.ndarray]] = {
    "sphere": _sphere,
    "cube": _cube,
    "cylinder": _cylinder,
    "torus": _torus,
}


def sample_shape(kind: str, n_points: int, rng: np.random.Generator) -> np.ndarray:
    """Surface samples of *kind*, randomly turned about z and scaled, with small jitter."""
    if kind not in _SAMPLERS:
        raise InvalidArgumentError(f"unknown shape {kind!r}; expected one of {SHAPES}")
    if n_points < 1:
        raise InvalidArgumentError("n_points must be >= 1")
    pts = _SAMPLERS[kind](rng, n_points)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    c, s = np.cos(angle), np.sin(angle)
    rotation = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    pts = pts @ rotation.T * rng.uniform(0.8, 1.2)
    pts += rng.normal(scale=JITTER, size=pts.shape)
    return pts.astype(np.float32)


def make_classification_set(
    seed: int, per_class: int, n_points: int, shapes: tuple[str, ...] = SHAPES
) -> list[LabeledCloud]:
    """``per_class`` clouds of every shape, labeled by position in *shapes*."""
    rng = np.random.default_rng(seed)
    samples = []
    for label, kind in enumerate(shapes):
        for i in range(per_class):
            pts = sample_shape(kind, n_points, rng)
            samples.append(LabeledCloud(PointCloud(pts), label=label, name=f"{kind}_{i:04d}"))
    return samples


def make_benchmark(
    seed: int, train_per_class: int, test_per_class: int, n_points: int
) -> tuple[list[LabeledCloud], list[LabeledCloud]]:
    """Disjoint train and test sets drawn from independent streams of one seed."""
    train = make_classification_set(seed * 2, train_per_class, n_points)
    test = make_classification_set(seed * 2 + 1, test_per_class, n_points)
    return train, test


def make_segmentation_set(seed: int, count: int, n_points: int) -> list[LabeledCloud]:
    """Random solids whose points are labeled 0 below z = 0 and 1 above."""
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(count):
        kind = SHAPES[int(rng.integers(len(SHAPES)))]
        pts = sample_shape(kind, n_points, rng)
        parts = (pts[:, 2] > 0.0).astype(np.int64)
        samples.append(
            LabeledCloud(PointCloud(pts), part_labels=parts, name=f"{kind}_parts_{i:04d}")
        )
    return samples
