"""Labeled samples and the tab-separated dataset manifest."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pointformer.core.errors import InvalidArgumentError, InvalidInputError, ParseError
from pointformer.geometry.pointcloud import PointCloud
from pointformer.io.off import read_off
from pointformer.io.point_binary import read_point_binary

logger = logging.getLogger(__name__)


@dataclass
class LabeledCloud:
    """One sample: a cloud with a class label, per-point part labels, or both."""

    cloud: PointCloud
    label: int | None = None
    part_labels: np.ndarray | None = None
    name: str = ""

    def __post_init__(self) -> None:
        if self.part_labels is not None:
            self.part_labels = np.asarray(self.part_labels, dtype=np.int64)
            if self.part_labels.shape != (len(self.cloud),):
                raise InvalidArgumentError(
                    f"{self.name or 'sample'}: {self.part_labels.shape[0]} part labels "
                    f"for {len(self.cloud)} points"
                )


@dataclass(frozen=True)
class ManifestRecord:
    """``path<TAB>label`` for classification, ``path<TAB>parts-path`` for segmentation."""

    path: str
    target: str

    @property
    def is_segmentation(self) -> bool:
        return not self.target.lstrip("-").isdigit()


def load_manifest(path: str | Path) -> list[ManifestRecord]:
    """Parse a manifest; blank lines and ``#`` comments are skipped."""
    records = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"{path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise InvalidInputError(f"{path}: manifest is not UTF-8 text") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split("\t")
        if len(fields) != 2 or not all(fields):
            raise ParseError("manifest records are 'path<TAB>label-or-parts-path'", lineno)
        records.append(ManifestRecord(path=fields[0], target=fields[1]))
    return records


def write_manifest(records: Iterable[ManifestRecord], path: str | Path) -> None:
    lines = [f"{r.path}\t{r.target}\n" for r in records]
    Path(path).write_text("".join(lines), encoding="utf-8")


def resolve(record_path: str, manifest_path: str | Path) -> Path:
    """Relative sample paths are taken relative to the manifest's directory."""
    candidate = Path(record_path)
    return candidate if candidate.is_absolute() else Path(manifest_path).parent / candidate


def class_count(samples: Sequence[LabeledCloud]) -> int:
    labels = {s.label for s in samples if s.label is not None}
    return 0 if not labels else max(labels) + 1


EMBEDDED_PARTS = "embedded"


def read_part_labels(path: str | Path) -> np.ndarray:
    """One non-negative integer per line, as in ShapeNet-part ``.seg`` files."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"{path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise InvalidInputError(f"{path}: part labels are not UTF-8 text") from exc
    labels = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            value = int(stripped)
        except ValueError as exc:
            raise ParseError(f"{path}: part label {stripped!r} is not an integer", lineno) from exc
        if value < 0:
            raise ParseError(f"{path}: negative part label {value}", lineno)
        labels.append(value)
    return np.asarray(labels, dtype=np.int64)


def load_sample(path: str | Path) -> tuple[PointCloud, np.ndarray | None]:
    """Read an ``.off`` mesh or an ``.apfp`` container (with its embedded labels)."""
    suffix = Path(path).suffix.lower()
    if suffix not in (".off", ".apfp"):
        raise InvalidArgumentError(
            f"{path}: unsupported sample type {suffix!r} (use .off or .apfp)"
        )
    try:
        if suffix == ".off":
            return read_off(path), None
        return read_point_binary(path)
    except OSError as exc:
        raise InvalidInputError(f"{path}: {exc.strerror or exc}") from exc


def load_dataset(manifest_path: str | Path, num_classes: int | None = None) -> list[LabeledCloud]:
    """Load every manifest record; paths resolve relative to the manifest."""
    records = load_manifest(manifest_path)
    if not records:
        raise InvalidArgumentError(f"{manifest_path}: no samples")
    samples = []
    for record in records:
        cloud, embedded = load_sample(resolve(record.path, manifest_path))
        if not record.is_segmentation:
            label = int(record.target)
            if label < 0 or (num_classes is not None and label >= num_classes):
                raise InvalidInputError(
                    f"{record.path}: label {label} outside [0, {num_classes or 'inf'})"
                )
            samples.append(LabeledCloud(cloud, label=label, name=record.path))
            continue
        if record.target == EMBEDDED_PARTS:
            if embedded is None:
                raise InvalidInputError(
                    f"{record.path}: manifest says embedded parts, file has none"
                )
            parts = embedded
        else:
            parts = read_part_labels(resolve(record.target, manifest_path))
        if parts.shape != (len(cloud),):
            raise InvalidInputError(
                f"{record.path}: {parts.shape[0]} part labels for {len(cloud)} points"
            )
        samples.append(LabeledCloud(cloud, part_labels=parts, name=record.path))
    logger.info("loaded %d samples from %s", len(samples), manifest_path)
    return samples
