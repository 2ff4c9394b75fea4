"""APFP: little-endian binary container for one point cloud and optional per-point labels.

Layout::

    magic "APFP" | version u32 | N u64 | C u32 | label_width u32
    N × (3 + C) float32 (xyz then features, row-major)
    N × label_width int32
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from pointformer.core.errors import (
    BadMagicError,
    FormatError,
    InvalidInputError,
    SizeMismatchError,
    TruncatedError,
    VersionMismatchError,
)
from pointformer.geometry.pointcloud import PointCloud

MAGIC = b"APFP"
VERSION = 1
HEADER = struct.Struct("<4sIQII")
MAX_LABEL_WIDTH = 1


def encode_point_binary(cloud: PointCloud | np.ndarray, labels: np.ndarray | None = None) -> bytes:
    if not isinstance(cloud, PointCloud):
        points = np.asarray(cloud, dtype=np.float32)
        if points.ndim != 2 or points.shape[0] == 0:
            raise InvalidInputError(f"cannot write an empty or malformed cloud {points.shape}")
        cloud = PointCloud(points)
    n = len(cloud)
    columns = [cloud.points]
    if cloud.features is not None:
        columns.append(cloud.features)
    payload = np.concatenate(columns, axis=1).astype("<f4")
    label_width = 0
    label_bytes = b""
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (n,):
            raise InvalidInputError(f"expected {n} per-point labels, got shape {labels.shape}")
        if labels.min() < np.iinfo(np.int32).min or labels.max() > np.iinfo(np.int32).max:
            raise InvalidInputError("labels do not fit in 32 bits")
        label_width = 1
        label_bytes = labels.astype("<i4").tobytes()
    header = HEADER.pack(MAGIC, VERSION, n, cloud.feature_channels, label_width)
    return header + payload.tobytes() + label_bytes


def write_point_binary(
    cloud: PointCloud | np.ndarray, labels: np.ndarray | None, path: str | Path
) -> None:
    """Write *cloud* (and optional per-point *labels*) to *path*; N must be at least 1."""
    Path(path).write_bytes(encode_point_binary(cloud, labels))


def decode_point_binary(data: bytes) -> tuple[PointCloud, np.ndarray | None]:
    """Validate the header arithmetic against ``len(data)``, then decode."""
    if len(data) < HEADER.size:
        if not MAGIC.startswith(data[:4]):
            raise BadMagicError("not an APFP file")
        raise TruncatedError(f"file has {len(data)} bytes, header needs {HEADER.size}")
    magic, version, n, channels, label_width = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatchError(f"APFP version {version}, this build reads {VERSION}")
    if n == 0:
        raise FormatError("APFP header declares zero points")
    if label_width > MAX_LABEL_WIDTH:
        raise FormatError(f"unsupported label width {label_width}")
    floats = n * (3 + channels)
    expected = HEADER.size + 4 * floats + 4 * n * label_width
    if len(data) < expected:
        raise TruncatedError(f"file has {len(data)} bytes, header declares {expected}")
    if len(data) > expected:
        raise SizeMismatchError(f"{len(data) - expected} trailing bytes after the payload")

    offset = HEADER.size
    table = np.frombuffer(data, dtype="<f4", count=floats, offset=offset).reshape(n, 3 + channels)
    offset += 4 * floats
    table = table.astype(np.float32)
    features = table[:, 3:] if channels else None
    labels = None
    if label_width:
        labels = np.frombuffer(data, dtype="<i4", count=n, offset=offset).astype(np.int64)
    try:
        cloud = PointCloud(table[:, :3], features)
    except InvalidInputError as exc:
        raise FormatError(f"APFP payload is invalid: {exc}") from exc
    return cloud, labels


def read_point_binary(path: str | Path) -> tuple[PointCloud, np.ndarray | None]:
    return decode_point_binary(Path(path).read_bytes())
