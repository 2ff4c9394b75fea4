"""Point cloud containers and unit-sphere normalization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pointformer.core.errors import InvalidInputError


@dataclass(frozen=True)
class PointCloud:
    """N unordered points with optional per-point features.

    ``points`` is (N, 3) float32, ``features`` is (N, C) float32 or None.
    """

    points: np.ndarray
    features: np.ndarray | None = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float32)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidInputError(f"points must have shape (N, 3), got {pts.shape}")
        if pts.shape[0] < 1:
            raise InvalidInputError("a point cloud needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.features is not None:
            feats = np.asarray(self.features, dtype=np.float32)
            if feats.ndim == 1:
                feats = feats.reshape(-1, 1)
            if feats.ndim != 2 or feats.shape[0] != pts.shape[0]:
                raise InvalidInputError(
                    f"features must have shape (N={pts.shape[0]}, C), got {feats.shape}"
                )
            object.__setattr__(self, "features", feats)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def feature_channels(self) -> int:
        return 0 if self.features is None else int(self.features.shape[1])

    def take(self, indices: np.ndarray) -> PointCloud:
        """Sub-cloud with the given point indices, features kept aligned."""
        idx = np.asarray(indices, dtype=np.int64)
        feats = None if self.features is None else self.features[idx]
        return PointCloud(self.points[idx], feats)


@dataclass
class GroupedPoints:
    """Sampled centroids, their k-neighborhoods and the Morton sequencing.

    ``morton_codes`` and ``order`` stay empty until the sequencer has run.
    """

    centroid_indices: np.ndarray
    groups: np.ndarray
    morton_codes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint64))
    order: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_groups(self) -> int:
        return int(self.centroid_indices.shape[0])

    @property
    def k(self) -> int:
        return int(self.groups.shape[1])

    @property
    def is_sequenced(self) -> bool:
        return self.order.shape[0] == self.n_groups


def bounding_box(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis (min, max) of an (N, 3) array."""
    pts = np.asarray(points)
    return pts.min(axis=0), pts.max(axis=0)


def normalize_unit_sphere(cloud: PointCloud) -> PointCloud:
    """Center the cloud on its centroid and scale it into the unit ball.

    The centroid is summed over axis-sorted coordinates in float64 so the result
    does not depend on point order. A cloud whose points all coincide maps to
    the origin.
    """
    pts = cloud.points.astype(np.float64)
    centroid = np.sort(pts, axis=0).sum(axis=0) / pts.shape[0]
    centered = pts - centroid
    radius = float(np.sqrt((centered**2).sum(axis=1)).max())
    if radius > 0.0:
        centered = centered / radius
    else:
        centered = np.zeros_like(centered)
    return PointCloud(centered.astype(np.float32), cloud.features)
