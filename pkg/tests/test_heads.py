"""Classifier head, cross-entropy and the dense segmentation head."""

from __future__ import annotations

import math

import numpy as np
import pytest

from pointformer.autodiff.tensor import Tensor
from pointformer.core.errors import ConfigError, InvalidArgumentError
from pointformer.geometry import group_points, normalize_unit_sphere
from pointformer.model.heads import (
    build_classifier,
    build_segmentation_head,
    class_probabilities,
    classify_logits,
    cross_entropy_loss,
    default_taps,
    interpolation_weights,
    segment_forward,
)


def interpolation_oracle(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    out = np.zeros((len(points), len(centroids)))
    for i, p in enumerate(points.astype(np.float64)):
        centers = centroids.astype(np.float64)
        dists = [(float(((p - c) ** 2).sum()), j) for j, c in enumerate(centers)]
        nearest = sorted(dists)[:3]
        raw = [1.0 / (d + 1e-8) for d, _ in nearest]
        for (_, j), r in zip(nearest, raw):
            out[i, j] = r / sum(raw)
    return out


class TestClassifier:
    def test_zero_weights_give_uniform(self):
        head = build_classifier(0, 8, 5)
        head.weight.data[:] = 0.0
        probs = class_probabilities(classify_logits(head, Tensor(np.ones((1, 8))))).data
        np.testing.assert_allclose(probs, 0.2, atol=1e-6)

    def test_closed_form_softmax(self):
        probs = class_probabilities(Tensor([math.log(3.0), 0.0], dtype=np.float64)).data
        np.testing.assert_allclose(probs, [0.75, 0.25], atol=1e-6)

    def test_shift_invariance(self, rng):
        logits = rng.normal(size=(3, 6))
        a = class_probabilities(Tensor(logits)).data
        b = class_probabilities(Tensor(logits + 17.0)).data
        np.testing.assert_allclose(a, b, atol=1e-6)
        assert np.array_equal(a.argmax(axis=-1), b.argmax(axis=-1))

    def test_batched_logits(self, rng):
        head = build_classifier(1, 8, 3)
        cls = Tensor(rng.normal(size=(4, 8)))
        assert classify_logits(head, cls).shape == (4, 3)

    def test_needs_two_classes(self):
        with pytest.raises(ConfigError):
            build_classifier(0, 8, 1)


class TestCrossEntropy:
    def test_uniform_two_class(self):
        loss = cross_entropy_loss(Tensor([0.0, 0.0], dtype=np.float64), 0)
        assert float(loss.data) == pytest.approx(math.log(2.0), abs=1e-6)

    def test_known_value(self):
        loss = cross_entropy_loss(Tensor([1.0, 2.0, 3.0], dtype=np.float64), 2)
        assert float(loss.data) == pytest.approx(0.407606, abs=1e-5)

    def test_decreases_with_margin(self):
        losses = [
            float(cross_entropy_loss(Tensor([m, 0.0, 0.0], dtype=np.float64), 0).data)
            for m in (0.0, 1.0, 5.0, 50.0)
        ]
        assert losses == sorted(losses, reverse=True)
        assert losses[-1] < 1e-12

    def test_stable_for_huge_logits(self):
        loss = cross_entropy_loss(Tensor([1e4, -1e4]), 1)
        assert np.isfinite(loss.data)

    def test_label_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            cross_entropy_loss(Tensor([0.0, 1.0]), 2)


class TestInterpolation:
    def test_rows_are_convex(self, rng):
        w = interpolation_weights(rng.normal(size=(40, 3)), rng.normal(size=(7, 3)))
        assert (w >= 0).all()
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-6)
        assert ((w > 0).sum(axis=1) == 3).all()

    def test_own_centroid_dominates(self):
        pts = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
        w = interpolation_weights(pts, pts)
        np.testing.assert_allclose(np.diag(w), 1.0, atol=1e-4)

    def test_constant_field_passes_through(self, rng):
        w = interpolation_weights(rng.normal(size=(30, 3)), rng.normal(size=(6, 3)))
        field = np.full((6, 4), 2.5, dtype=np.float32)
        np.testing.assert_allclose(w @ field, 2.5, atol=1e-5)

    def test_matches_brute_force(self, rng):
        pts = rng.normal(size=(25, 3))
        ctr = rng.normal(size=(8, 3))
        np.testing.assert_allclose(
            interpolation_weights(pts, ctr), interpolation_oracle(pts, ctr), atol=1e-5
        )

    def test_fewer_centroids_than_neighbors(self, rng):
        w = interpolation_weights(rng.normal(size=(5, 3)), rng.normal(size=(2, 3)))
        assert w.shape == (5, 2)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-6)


class TestSegmentationHead:
    @pytest.fixture
    def sample(self, make_cloud):
        cloud = normalize_unit_sphere(make_cloud(48))
        return cloud, group_points(cloud, 8, 4)

    def test_default_taps(self):
        assert default_taps(12) == (4, 8, 12)
        assert default_taps(4) == (1, 2, 4)
        assert default_taps(1) == (1,)

    def test_bad_taps(self):
        with pytest.raises(ConfigError):
            build_segmentation_head(0, 8, 3, 2, taps=(2, 1))
        with pytest.raises(ConfigError):
            build_segmentation_head(0, 8, 3, 2, taps=(4,))

    def test_output_shape(self, sample, rng):
        cloud, grouped = sample
        head = build_segmentation_head(0, 16, 3, 5, fusion_widths=(12,), point_widths=(8,))
        seqs = [Tensor(rng.normal(size=(9, 16))) for _ in range(3)]
        logits = segment_forward(head, seqs, grouped, cloud)
        assert logits.shape == (48, 5)
        assert np.isfinite(logits.data).all()

    def test_batch_matches_single(self, sample, make_cloud, rng):
        cloud, grouped = sample
        other = normalize_unit_sphere(make_cloud(48))
        other_grouped = group_points(other, 8, 4)
        head = build_segmentation_head(2, 16, 2, 3, fusion_widths=(12,), point_widths=(8,))
        seqs = [rng.normal(size=(2, 9, 16)).astype(np.float32) for _ in range(2)]
        batched = segment_forward(
            head, [Tensor(s) for s in seqs], [grouped, other_grouped], [cloud, other]
        ).data
        single = segment_forward(head, [Tensor(s[1]) for s in seqs], other_grouped, other).data
        np.testing.assert_allclose(batched[1], single, atol=1e-5)

    def test_token_order_is_undone(self, sample, rng):
        # Sequences permuted by the Morton order must map back onto the same centroids.
        cloud, grouped = sample
        head = build_segmentation_head(3, 16, 1, 3, fusion_widths=(12,), point_widths=(8,))
        per_centroid = rng.normal(size=(8, 16)).astype(np.float32)
        cls = rng.normal(size=(1, 16)).astype(np.float32)
        ordered = np.concatenate([cls, per_centroid[grouped.order]])
        a = segment_forward(head, [Tensor(ordered)], grouped, cloud).data

        unsequenced = type(grouped)(
            centroid_indices=grouped.centroid_indices,
            groups=grouped.groups,
            order=np.arange(8),
        )
        plain = np.concatenate([cls, per_centroid])
        b = segment_forward(head, [Tensor(plain)], unsequenced, cloud).data
        np.testing.assert_allclose(a, b, atol=1e-5)

    def test_missing_taps(self, sample, rng):
        cloud, grouped = sample
        head = build_segmentation_head(0, 16, 3, 2)
        with pytest.raises(ConfigError):
            segment_forward(head, [Tensor(rng.normal(size=(9, 16)))], grouped, cloud)
