"""Farthest point sampling, kNN grouping and the composed grouping pipeline."""

from __future__ import annotations

import numpy as np

from pointformer.core.errors import InvalidArgumentError
from pointformer.geometry.morton import MortonConfig, morton_codes
from pointformer.geometry.pointcloud import GroupedPoints, PointCloud

CANONICAL = "canonical"


def _squared_distances(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    return ((points - center) ** 2).sum(axis=1)


def tie_rank(cloud: PointCloud) -> np.ndarray:
    """Rank of every point under (Morton code, x, y, z), Morton grid over the cloud's box.

    Rank 0 is the canonical FPS start; lower ranks win distance ties.
    """
    pts = cloud.points
    codes = morton_codes(pts, MortonConfig.from_points(pts))
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], codes))
    rank = np.empty(len(cloud), dtype=np.int64)
    rank[order] = np.arange(len(cloud), dtype=np.int64)
    return rank


def farthest_point_sample(
    cloud: PointCloud,
    n_s: int,
    start: int | str = CANONICAL,
) -> np.ndarray:
    """Greedy FPS returning ``n_s`` distinct indices in selection order.

    Each pick after the first maximizes the minimum distance to the points
    already chosen; ties go to the lower :func:`tie_rank`.
    """
    n = len(cloud)
    if not 1 <= n_s <= n:
        raise InvalidArgumentError(f"n_s must be in [1, {n}], got {n_s}")
    rank = tie_rank(cloud)
    if start == CANONICAL:
        first = int(np.argmin(rank))
    elif isinstance(start, (int, np.integer)) and 0 <= int(start) < n:
        first = int(start)
    else:
        raise InvalidArgumentError(
            f"start must be 'canonical' or an index in [0, {n}), got {start!r}"
        )

    pts = cloud.points.astype(np.float64)
    selected = np.empty(n_s, dtype=np.int64)
    selected[0] = first
    taken = np.zeros(n, dtype=bool)
    taken[first] = True
    min_dist = _squared_distances(pts, pts[first])
    for step in range(1, n_s):
        masked = np.where(taken, -np.inf, min_dist)
        best = masked.max()
        candidates = np.flatnonzero(masked == best)
        pick = int(candidates[np.argmin(rank[candidates])])
        selected[step] = pick
        taken[pick] = True
        min_dist = np.minimum(min_dist, _squared_distances(pts, pts[pick]))
    return selected


def knn_group(cloud: PointCloud, centroid_indices: np.ndarray, k: int) -> GroupedPoints:
    """The k nearest points of every centroid, nearest first.

    A centroid always heads its own group; other distance ties go to the
    smaller point index.
    """
    n = len(cloud)
    if not 1 <= k <= n:
        raise InvalidArgumentError(f"k must be in [1, {n}], got {k}")
    centers = np.asarray(centroid_indices, dtype=np.int64)
    if centers.ndim != 1 or centers.size == 0 or centers.min() < 0 or centers.max() >= n:
        raise InvalidArgumentError("centroid indices must be a non-empty list of valid indices")

    pts = cloud.points.astype(np.float64)
    dist = ((pts[None, :, :] - pts[centers][:, None, :]) ** 2).sum(axis=2)
    dist[np.arange(centers.shape[0]), centers] = -1.0
    groups = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return GroupedPoints(centroid_indices=centers, groups=groups.astype(np.int64))


def group_points(
    cloud: PointCloud,
    n_groups: int,
    k: int,
    bits_per_axis: int = 10,
    sequencer: bool = True,
    start: int | str = CANONICAL,
) -> GroupedPoints:
    """FPS → kNN → Morton sequencing into a fully populated :class:`GroupedPoints`.

    With ``sequencer=False`` the order is the identity (no-sequencer ablation);
    codes are still recorded.
    """
    n_s = min(n_groups, len(cloud))
    centers = farthest_point_sample(cloud, n_s, start)
    grouped = knn_group(cloud, centers, min(k, len(cloud)))
    config = MortonConfig(bits_per_axis=bits_per_axis)
    grouped.morton_codes = morton_codes(cloud.points[centers], config)
    if sequencer:
        grouped.order = np.argsort(grouped.morton_codes, kind="stable").astype(np.int64)
    else:
        grouped.order = np.arange(n_s, dtype=np.int64)
    return grouped


def resample(cloud: PointCloud, n_points: int) -> np.ndarray:
    """Indices bringing *cloud* to exactly ``n_points`` points.

    Larger clouds are thinned with canonical FPS; smaller ones repeat their
    points cyclically in :func:`tie_rank` order, so the padding does not depend
    on how the input was ordered. Callers gather labels with the same indices.
    """
    if n_points < 1:
        raise InvalidArgumentError(f"n_points must be >= 1, got {n_points}")
    n = len(cloud)
    if n >= n_points:
        return farthest_point_sample(cloud, n_points)
    canonical = np.argsort(tie_rank(cloud), kind="stable")
    return canonical[np.arange(n_points, dtype=np.int64) % n]
