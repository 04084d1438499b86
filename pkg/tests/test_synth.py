"""Tests for the synthetic labeled-scene generator."""

import numpy as np
import pytest

from semgrid import NUM_CLASSES, ClassId, synth_scene, synth_sequence, transform_points
from semgrid.synth import scan_pose


class TestSynthScene:
    def test_deterministic_per_seed(self):
        a = synth_scene(seed=3, n_points=2000)
        b = synth_scene(seed=3, n_points=2000)
        assert np.array_equal(a.xyz, b.xyz)
        assert np.array_equal(a.intensity, b.intensity)
        assert np.array_equal(a.labels, b.labels)

    def test_seed_changes_points(self):
        a = synth_scene(seed=0, n_points=2000)
        b = synth_scene(seed=1, n_points=2000)
        assert not np.array_equal(a.xyz, b.xyz)

    def test_point_count_and_ranges(self):
        cloud = synth_scene(seed=5, n_points=4321)
        assert cloud.xyz.shape == (4321, 3)
        assert np.isfinite(cloud.xyz).all()
        assert cloud.intensity.min() >= 0.0 and cloud.intensity.max() <= 1.0
        assert cloud.labels.min() >= 0 and cloud.labels.max() < NUM_CLASSES

    def test_every_class_appears(self):
        cloud = synth_scene(seed=2, n_points=5000)
        present = set(np.unique(cloud.labels).tolist())
        assert present == set(range(NUM_CLASSES))

    def test_scan_index_shifts_frame(self):
        # The same world is observed from a sensor 2 m further down the road,
        # so the per-scan clouds must differ.
        a = synth_scene(seed=0, n_points=2000, scan_index=0)
        b = synth_scene(seed=0, n_points=2000, scan_index=1)
        assert not np.array_equal(a.xyz, b.xyz)

    def test_static_world_is_pose_consistent(self):
        # Road points from two scans map into the same world z band.
        a = synth_scene(seed=0, n_points=8000, scan_index=0)
        b = synth_scene(seed=0, n_points=8000, scan_index=3)
        world_a = transform_points(a, scan_pose(0))
        world_b = transform_points(b, scan_pose(3))
        za = world_a.xyz[world_a.labels == ClassId.ROAD, 2]
        zb = world_b.xyz[world_b.labels == ClassId.ROAD, 2]
        assert abs(float(np.median(za)) - float(np.median(zb))) < 0.05

    def test_zero_points(self):
        cloud = synth_scene(seed=0, n_points=0)
        assert len(cloud) == 0
        assert cloud.labels is not None and cloud.labels.shape == (0,)

    def test_negative_points_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            synth_scene(seed=0, n_points=-1)


class TestScanPose:
    def test_translation_along_road(self):
        pose = scan_pose(4)
        assert np.array_equal(pose.rotation, np.eye(3))
        assert np.allclose(pose.translation, [8.0, 0.0, 0.0])


class TestSynthSequence:
    def test_structure(self):
        seq = synth_sequence(seed=1, count=5, n_points=500)
        assert len(seq.clouds) == 5
        assert len(seq.poses) == 5
        assert seq.reference == 2

    def test_reference_override(self):
        seq = synth_sequence(seed=1, count=4, n_points=500, reference=0)
        assert seq.reference == 0

    def test_count_must_be_positive(self):
        with pytest.raises(ValueError, match="count"):
            synth_sequence(seed=0, count=0)
