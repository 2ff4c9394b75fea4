"""PointFormer geometry kernels: normalization, sampling, grouping and Morton sequencing."""

from pointformer.geometry.morton import (
    MortonConfig,
    apply_inverse_order,
    apply_order,
    inverse_permutation,
    morton_codes,
    morton_encode,
    morton_encode_array,
    morton_order,
    quantize,
)
from pointformer.geometry.pointcloud import (
    GroupedPoints,
    PointCloud,
    bounding_box,
    normalize_unit_sphere,
)
from pointformer.geometry.sampling import (
    CANONICAL,
    farthest_point_sample,
    group_points,
    knn_group,
    resample,
    tie_rank,
)

__all__ = [
    "CANONICAL",
    "GroupedPoints",
    "MortonConfig",
    "PointCloud",
    "apply_inverse_order",
    "apply_order",
    "bounding_box",
    "farthest_point_sample",
    "group_points",
    "inverse_permutation",
    "knn_group",
    "morton_codes",
    "morton_encode",
    "morton_encode_array",
    "morton_order",
    "normalize_unit_sphere",
    "quantize",
    "resample",
    "tie_rank",
]
