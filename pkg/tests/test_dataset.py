"""Manifests, sample loading and the synthetic benchmarks."""

from __future__ import annotations

import numpy as np
import pytest

from pointformer.core.errors import InvalidArgumentError, InvalidInputError, ParseError
from pointformer.geometry import PointCloud
from pointformer.io.dataset import (
    LabeledCloud,
    ManifestRecord,
    class_count,
    load_dataset,
    load_manifest,
    read_part_labels,
    write_manifest,
)
from pointformer.io.point_binary import write_point_binary
from pointformer.io.synthetic import (
    SHAPES,
    make_benchmark,
    make_classification_set,
    make_segmentation_set,
    sample_shape,
)

TRIANGLE = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"


class TestManifest:
    def test_round_trip(self, tmp_path):
        records = [ManifestRecord("a.off", "3"), ManifestRecord("b.apfp", "embedded")]
        path = tmp_path / "manifest.tsv"
        write_manifest(records, path)
        assert load_manifest(path) == records
        assert not records[0].is_segmentation and records[1].is_segmentation

    def test_comments_and_blanks(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        path.write_text("# header\n\na.off\t1\n")
        assert load_manifest(path) == [ManifestRecord("a.off", "1")]

    def test_bad_record_names_line(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        path.write_text("a.off\t1\nb.off 2\n")
        with pytest.raises(ParseError) as info:
            load_manifest(path)
        assert info.value.line == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidInputError):
            load_manifest(tmp_path / "missing.tsv")

    def test_not_utf8(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        path.write_bytes(b"a.off\t1\n\xff\xfe\n")
        with pytest.raises(InvalidInputError):
            load_manifest(path)


class TestLoadDataset:
    def test_classification(self, tmp_path):
        (tmp_path / "tri.off").write_text(TRIANGLE)
        write_point_binary(np.ones((5, 3)), None, tmp_path / "ones.apfp")
        (tmp_path / "m.tsv").write_text("tri.off\t0\nones.apfp\t2\n")
        samples = load_dataset(tmp_path / "m.tsv", num_classes=3)
        assert [s.label for s in samples] == [0, 2]
        assert len(samples[1].cloud) == 5
        assert class_count(samples) == 3

    def test_label_outside_class_count(self, tmp_path):
        (tmp_path / "tri.off").write_text(TRIANGLE)
        (tmp_path / "m.tsv").write_text("tri.off\t5\n")
        with pytest.raises(InvalidInputError):
            load_dataset(tmp_path / "m.tsv", num_classes=3)

    def test_part_label_files(self, tmp_path):
        (tmp_path / "tri.off").write_text(TRIANGLE)
        (tmp_path / "tri.seg").write_text("1\n0\n1\n")
        (tmp_path / "m.tsv").write_text("tri.off\ttri.seg\n")
        (sample,) = load_dataset(tmp_path / "m.tsv")
        np.testing.assert_array_equal(sample.part_labels, [1, 0, 1])
        assert sample.label is None

    def test_embedded_part_labels(self, tmp_path):
        write_point_binary(np.eye(3), np.array([2, 0, 1]), tmp_path / "p.apfp")
        (tmp_path / "m.tsv").write_text("p.apfp\tembedded\n")
        (sample,) = load_dataset(tmp_path / "m.tsv")
        np.testing.assert_array_equal(sample.part_labels, [2, 0, 1])

    def test_embedded_without_labels(self, tmp_path):
        write_point_binary(np.eye(3), None, tmp_path / "p.apfp")
        (tmp_path / "m.tsv").write_text("p.apfp\tembedded\n")
        with pytest.raises(InvalidInputError):
            load_dataset(tmp_path / "m.tsv")

    def test_part_count_mismatch(self, tmp_path):
        (tmp_path / "tri.off").write_text(TRIANGLE)
        (tmp_path / "tri.seg").write_text("1\n0\n")
        (tmp_path / "m.tsv").write_text("tri.off\ttri.seg\n")
        with pytest.raises(InvalidInputError):
            load_dataset(tmp_path / "m.tsv")

    def test_empty_manifest(self, tmp_path):
        (tmp_path / "m.tsv").write_text("# nothing\n")
        with pytest.raises(InvalidArgumentError, match="no samples"):
            load_dataset(tmp_path / "m.tsv")

    def test_unknown_suffix(self, tmp_path):
        (tmp_path / "x.ply").write_text("ply\n")
        (tmp_path / "m.tsv").write_text("x.ply\t0\n")
        with pytest.raises(InvalidArgumentError):
            load_dataset(tmp_path / "m.tsv")

    def test_missing_sample_file(self, tmp_path):
        (tmp_path / "m.tsv").write_text("gone.off\t0\n")
        with pytest.raises(InvalidInputError, match="gone.off"):
            load_dataset(tmp_path / "m.tsv")

    def test_negative_part_label(self, tmp_path):
        path = tmp_path / "x.seg"
        path.write_text("0\n-1\n")
        with pytest.raises(ParseError) as info:
            read_part_labels(path)
        assert info.value.line == 2

    def test_labeled_cloud_checks_parts(self):
        with pytest.raises(InvalidArgumentError):
            LabeledCloud(PointCloud(np.zeros((3, 3))), part_labels=np.zeros(2))


class TestSynthetic:
    @pytest.mark.parametrize("kind", SHAPES)
    def test_shapes(self, kind, rng):
        pts = sample_shape(kind, 200, rng)
        assert pts.shape == (200, 3) and pts.dtype == np.float32
        radius = np.linalg.norm(pts, axis=1)
        assert radius.max() < 2.5

    def test_sphere_lies_on_a_shell(self, rng):
        radius = np.linalg.norm(sample_shape("sphere", 500, rng), axis=1)
        assert radius.max() - radius.min() < 0.1

    def test_unknown_shape(self, rng):
        with pytest.raises(InvalidArgumentError):
            sample_shape("cone", 10, rng)

    def test_classification_set(self):
        samples = make_classification_set(0, per_class=3, n_points=32)
        assert len(samples) == 12
        assert [s.label for s in samples] == [0] * 3 + [1] * 3 + [2] * 3 + [3] * 3

    def test_seeded(self):
        a = make_classification_set(9, 2, 16)
        b = make_classification_set(9, 2, 16)
        assert all(x.cloud.points.tobytes() == y.cloud.points.tobytes() for x, y in zip(a, b))

    def test_benchmark_splits_differ(self):
        train, test = make_benchmark(1, 2, 2, 16)
        assert train[0].cloud.points.tobytes() != test[0].cloud.points.tobytes()

    def test_segmentation_labels_follow_height(self):
        for sample in make_segmentation_set(2, 3, 64):
            np.testing.assert_array_equal(
                sample.part_labels, (sample.cloud.points[:, 2] > 0).astype(np.int64)
            )
