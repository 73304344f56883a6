"""Procedural RGB-D scene with analytic ground truth.

The scene is the inside of an axis-aligned box whose walls carry a smooth
trigonometric color field evaluated at the 3D hit point of each view ray.
Because the walls are the box itself, ray casting has a closed form (the
slab exit distance), so depth, color, and the pixel-to-world map are exact
and any trained model can be checked against analytic labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SynthConfig
from .errors import InvalidInputError, InvalidPoseError
from .geometry import Intrinsics, look_at, rotation_of, translation_of

_INTERIOR_MARGIN = 0.25  # camera positions stay this fraction away from walls
_FREQ_MIN_RAD_M = 2.0  # angular spatial frequency bounds of the color field
_FREQ_MAX_RAD_M = 20.0


@dataclass(frozen=True)
class SyntheticScene:
    """Box room plus the seeded coefficients of its color field."""

    room: np.ndarray  # (3,) box extents in meters, box spans [0, room]
    seed: int
    frequencies: np.ndarray  # (3, k, 3) angular spatial frequencies per channel
    phases: np.ndarray  # (3, k)
    weights: np.ndarray  # (3, k), |weights| sums to 1 per channel

    def color_field(self, points: np.ndarray) -> np.ndarray:
        """RGB in [0, 255] (float) for (..., 3) world points."""
        pts = np.asarray(points, dtype=np.float64)
        flat = pts.reshape(-1, 3)
        channels = []
        for c in range(3):
            phase = flat @ self.frequencies[c].T + self.phases[c]
            channels.append(np.sin(phase) @ self.weights[c])
        mixed = np.stack(channels, axis=-1)  # (n, 3) in [-1, 1]
        rgb = 127.5 + 127.5 * mixed
        return rgb.reshape(pts.shape)

    def contains(self, point: np.ndarray, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=np.float64)
        return bool(np.all(p > margin) and np.all(p < self.room - margin))


def make_scene(config: SynthConfig, seed: int) -> SyntheticScene:
    """Draw the color-field coefficients for one scene."""
    rng = np.random.default_rng(seed)
    k = config.color_components
    if k < 1:
        raise InvalidInputError("scene needs at least one color component")
    # random directions with log-uniform spatial scales: low frequencies give
    # every wall region a distinct base color, high ones texture the patches
    directions = rng.normal(size=(3, k, 3))
    directions /= np.linalg.norm(directions, axis=2, keepdims=True)
    magnitudes = np.exp(rng.uniform(
        np.log(_FREQ_MIN_RAD_M), np.log(_FREQ_MAX_RAD_M), size=(3, k)
    ))
    frequencies = directions * magnitudes[:, :, None]
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(3, k))
    weights = rng.uniform(0.3, 1.0, size=(3, k))
    weights /= np.abs(weights).sum(axis=1, keepdims=True)
    return SyntheticScene(
        room=np.array([config.room_x, config.room_y, config.room_z]),
        seed=seed,
        frequencies=frequencies,
        phases=phases,
        weights=weights,
    )


def default_intrinsics(config: SynthConfig) -> Intrinsics:
    return Intrinsics(
        fx=config.focal, fy=config.focal,
        cx=(config.width - 1) / 2.0, cy=(config.height - 1) / 2.0,
        width=config.width, height=config.height,
    )


def ray_box_exit(origin: np.ndarray, directions: np.ndarray,
                 room: np.ndarray) -> np.ndarray:
    """Parametric distance to the box wall along each ray from inside.

    directions may be unnormalized; the result t satisfies
    origin + t * direction on the box surface, t > 0.
    """
    dirs = np.asarray(directions, dtype=np.float64)
    t_exit = np.full(dirs.shape[:-1], np.inf)
    for axis in range(3):
        d = dirs[..., axis]
        with np.errstate(divide="ignore"):
            positive = np.where(d > 0, (room[axis] - origin[axis]) / d, np.inf)
            negative = np.where(d < 0, (0.0 - origin[axis]) / d, np.inf)
        t_exit = np.minimum(t_exit, np.minimum(positive, negative))
    return t_exit


def render_frame(scene: SyntheticScene, pose: np.ndarray,
                 intrinsics: Intrinsics):
    """Render a frame from a camera-to-world pose.

    Returns (rgb uint8 (H,W,3), depth float64 meters (H,W), gt_coords
    float64 (H,W,3)). Depth is the camera-frame z of the wall hit, which for
    pinhole rays with unit z equals the ray parameter itself, so
    backprojection reproduces gt_coords to machine precision.
    """
    position = translation_of(pose)
    if not scene.contains(position):
        raise InvalidPoseError("camera must be inside the room")
    h, w = intrinsics.height, intrinsics.width
    us, vs = np.meshgrid(np.arange(w), np.arange(h))
    dirs_cam = np.stack([
        (us - intrinsics.cx) / intrinsics.fx,
        (vs - intrinsics.cy) / intrinsics.fy,
        np.ones_like(us, dtype=np.float64),
    ], axis=-1)
    dirs_world = dirs_cam @ rotation_of(pose).T
    depth = ray_box_exit(position, dirs_world, scene.room)
    gt_coords = position + depth[..., None] * dirs_world
    rgb = np.clip(np.rint(scene.color_field(gt_coords)), 0, 255).astype(np.uint8)
    return rgb, depth, gt_coords


def sample_trajectory(scene: SyntheticScene, n_train: int, n_test: int,
                      seed: int):
    """Random interior poses looking at random wall points.

    Returns (train (n_train,4,4), test (n_test,4,4)); the two sets use
    disjoint seed streams of one root seed.
    """
    if n_train < 1 or n_test < 1:
        raise InvalidInputError("need at least one frame per split")
    train = _sample_poses(scene, n_train, np.random.default_rng([seed, 0]))
    test = _sample_poses(scene, n_test, np.random.default_rng([seed, 1]))
    return train, test


def _sample_poses(scene: SyntheticScene, count: int,
                  rng: np.random.Generator) -> np.ndarray:
    low = _INTERIOR_MARGIN * scene.room
    high = (1.0 - _INTERIOR_MARGIN) * scene.room
    poses = np.empty((count, 4, 4))
    for i in range(count):
        position = rng.uniform(low, high)
        target = _wall_point(scene, rng)
        poses[i] = look_at(position, target)
    return poses


def _wall_point(scene: SyntheticScene, rng: np.random.Generator) -> np.ndarray:
    """Random point on one of the four vertical walls.

    Aiming only at vertical walls keeps every view direction well away from
    the straight-up and straight-down singularities of look_at and gives the
    train and test splits a shared orientation distribution, so novel test
    views stay within the appearance range the forest was trained on.
    """
    wall = int(rng.integers(0, 4))
    point = rng.uniform(0.0, 1.0, size=3) * scene.room
    axis, side = divmod(wall, 2)
    point[axis] = 0.0 if side == 0 else scene.room[axis]
    return point
