"""Procedural scene: analytic ray casting, rendering, and trajectories."""

import numpy as np
import pytest

from relocforest.config import SynthConfig
from relocforest.errors import InvalidInputError, InvalidPoseError
from relocforest.geometry import backproject, transform_points, validate_pose
from relocforest.synth import (
    default_intrinsics,
    make_scene,
    ray_box_exit,
    render_frame,
    sample_trajectory,
)

TINY = SynthConfig(width=48, height=36, focal=40.0)


def plane_exit_oracle(origin, direction, room):
    """Smallest positive intersection parameter over all six wall planes."""
    candidates = []
    for axis in range(3):
        for bound in (0.0, room[axis]):
            if direction[axis] != 0.0:
                t = (bound - origin[axis]) / direction[axis]
                if t > 0:
                    candidates.append(t)
    return min(candidates)


class TestRayCasting:
    def test_matches_plane_oracle(self):
        rng = np.random.default_rng(0)
        room = np.array([4.0, 3.0, 2.5])
        for _ in range(200):
            origin = rng.uniform(0.1, 0.9, size=3) * room
            direction = rng.normal(size=3)
            t = ray_box_exit(origin, direction, room)
            assert t == pytest.approx(plane_exit_oracle(origin, direction,
                                                        room), rel=1e-12)

    def test_axis_aligned_ray(self):
        room = np.array([4.0, 3.0, 2.5])
        t = ray_box_exit(np.array([1.0, 1.0, 1.0]), np.array([1.0, 0.0, 0.0]),
                         room)
        assert t == 3.0
        t = ray_box_exit(np.array([1.0, 1.0, 1.0]),
                         np.array([0.0, -1.0, 0.0]), room)
        assert t == 1.0

    def test_exit_points_lie_on_walls(self):
        rng = np.random.default_rng(1)
        room = np.array([2.0, 5.0, 3.0])
        origin = np.array([1.0, 2.0, 1.5])
        dirs = rng.normal(size=(300, 3))
        ts = ray_box_exit(origin, dirs, room)
        assert np.all(ts > 0)
        hits = origin + ts[:, None] * dirs
        assert np.all(hits >= -1e-9) and np.all(hits <= room + 1e-9)
        wall_gap = np.minimum(np.abs(hits), np.abs(room - hits)).min(axis=1)
        assert wall_gap.max() < 1e-9


class TestColorField:
    def test_range_and_determinism(self):
        scene_a = make_scene(TINY, seed=3)
        scene_b = make_scene(TINY, seed=3)
        rng = np.random.default_rng(2)
        pts = rng.uniform(0, 1, size=(500, 3)) * scene_a.room
        rgb = scene_a.color_field(pts)
        assert rgb.shape == (500, 3)
        assert rgb.min() >= 0.0 and rgb.max() <= 255.0
        np.testing.assert_array_equal(rgb, scene_b.color_field(pts))

    def test_different_seeds_differ(self):
        pts = np.array([[1.0, 1.0, 1.0], [2.0, 1.5, 0.5]])
        a = make_scene(TINY, seed=4).color_field(pts)
        b = make_scene(TINY, seed=5).color_field(pts)
        assert np.abs(a - b).max() > 1.0

    def test_scene_parameters(self):
        scene = make_scene(TINY, seed=6)
        assert scene.frequencies.shape == (3, TINY.color_components, 3)
        magnitudes = np.linalg.norm(scene.frequencies, axis=2)
        assert magnitudes.min() >= 2.0 and magnitudes.max() <= 20.0
        np.testing.assert_allclose(np.abs(scene.weights).sum(axis=1), 1.0,
                                   rtol=1e-12)

    def test_zero_components_rejected(self):
        with pytest.raises(InvalidInputError):
            make_scene(SynthConfig(color_components=0), seed=0)

    def test_contains(self):
        scene = make_scene(TINY, seed=7)
        assert scene.contains([1.0, 1.0, 1.0])
        assert not scene.contains([-0.1, 1.0, 1.0])
        assert not scene.contains([1.0, 3.5, 1.0])
        assert not scene.contains([0.2, 1.0, 1.0], margin=0.5)


class TestRendering:
    def setup_method(self):
        self.scene = make_scene(TINY, seed=8)
        self.intrinsics = default_intrinsics(TINY)
        train, _ = sample_trajectory(self.scene, 3, 1, seed=9)
        self.pose = train[0]

    def test_depth_bounds(self):
        _, depth, _ = render_frame(self.scene, self.pose, self.intrinsics)
        assert depth.shape == (36, 48)
        assert np.all(depth > 0)
        assert depth.max() <= np.linalg.norm(self.scene.room) + 1e-9

    def test_backprojection_reproduces_world_points(self):
        _, depth, gt = render_frame(self.scene, self.pose, self.intrinsics)
        us, vs = np.meshgrid(np.arange(48), np.arange(36))
        cam = backproject(us.ravel(), vs.ravel(), depth.ravel(),
                          self.intrinsics)
        world = transform_points(self.pose, cam)
        np.testing.assert_allclose(world, gt.reshape(-1, 3),
                                   rtol=0, atol=1e-9)

    def test_world_points_lie_on_walls(self):
        _, _, gt = render_frame(self.scene, self.pose, self.intrinsics)
        pts = gt.reshape(-1, 3)
        gap = np.minimum(np.abs(pts), np.abs(self.scene.room - pts)).min(axis=1)
        assert gap.max() < 1e-9

    def test_color_is_quantized_field_value(self):
        rgb, _, gt = render_frame(self.scene, self.pose, self.intrinsics)
        expected = np.clip(np.rint(self.scene.color_field(gt)),
                           0, 255).astype(np.uint8)
        np.testing.assert_array_equal(rgb, expected)

    def test_render_deterministic(self):
        a = render_frame(self.scene, self.pose, self.intrinsics)
        b = render_frame(self.scene, self.pose, self.intrinsics)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_camera_outside_room_rejected(self):
        outside = self.pose.copy()
        outside[:3, 3] = [-1.0, 1.0, 1.0]
        with pytest.raises(InvalidPoseError):
            render_frame(self.scene, outside, self.intrinsics)

    def test_camera_on_wall_rejected(self):
        boundary = self.pose.copy()
        boundary[:3, 3] = [0.0, 1.0, 1.0]
        with pytest.raises(InvalidPoseError):
            render_frame(self.scene, boundary, self.intrinsics)


class TestTrajectories:
    def test_poses_valid_and_inside(self):
        scene = make_scene(TINY, seed=10)
        train, test = sample_trajectory(scene, 8, 4, seed=11)
        assert train.shape == (8, 4, 4)
        assert test.shape == (4, 4, 4)
        for pose in np.concatenate([train, test]):
            validate_pose(pose, tol=1e-9)
            assert scene.contains(pose[:3, 3], margin=0.2)

    def test_deterministic(self):
        scene = make_scene(TINY, seed=12)
        a_train, a_test = sample_trajectory(scene, 5, 3, seed=13)
        b_train, b_test = sample_trajectory(scene, 5, 3, seed=13)
        np.testing.assert_array_equal(a_train, b_train)
        np.testing.assert_array_equal(a_test, b_test)

    def test_splits_disjoint(self):
        scene = make_scene(TINY, seed=14)
        train, test = sample_trajectory(scene, 6, 6, seed=15)
        # same count yet different poses: the streams are independent
        assert np.abs(train - test).max() > 1e-6

    def test_empty_split_rejected(self):
        scene = make_scene(TINY, seed=16)
        with pytest.raises(InvalidInputError):
            sample_trajectory(scene, 0, 2, seed=17)

    def test_default_intrinsics_center(self):
        k = default_intrinsics(SynthConfig(width=320, height=240,
                                           focal=300.0))
        assert (k.fx, k.fy) == (300.0, 300.0)
        assert (k.cx, k.cy) == (159.5, 119.5)
        assert (k.width, k.height) == (320, 240)
