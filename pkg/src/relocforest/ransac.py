"""Preemptive RANSAC over predicted 3D correspondences.

A fixed pool of pose hypotheses is generated from random minimal subsets,
then scored on shuffled observations in blocks; after every block only the
top half of the pool survives. The last hypothesis standing is rescored on
all observations, refined on its inliers, and reported together with the
inlier set under the refined pose.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .config import RansacConfig
from .errors import (
    DegenerateConfigurationError,
    InsufficientDataError,
    InvalidInputError,
    NoSolutionError,
)
from .geometry import (
    Intrinsics,
    invert_pose,
    kabsch,
    project_masked,
    refine_pose_2d3d,
    solve_p3p_pixels,
    transform_points,
)

_MAX_MINIMAL_RETRIES = 50


class SolveMode(Enum):
    KABSCH_3D = "kabsch3d"  # observations are camera-space 3D points
    PNP_2D = "pnp2d"  # observations are pixels

    @property
    def minimal_size(self) -> int:
        return 3 if self is SolveMode.KABSCH_3D else 4


@dataclass
class Correspondence:
    """One world-point prediction paired with its camera observation."""

    world: np.ndarray  # (3,)
    observation: np.ndarray  # (3,) camera point or (2,) pixel
    tree_index: int = 0


@dataclass
class CorrespondenceSet:
    """Column layout of correspondences for array scoring."""

    world: np.ndarray  # (n, 3)
    observations: np.ndarray  # (n, 3) or (n, 2)
    tree_index: np.ndarray | None = None  # (n,)

    def __post_init__(self) -> None:
        self.world = np.asarray(self.world, dtype=np.float64)
        self.observations = np.asarray(self.observations, dtype=np.float64)
        if self.world.ndim != 2 or self.world.shape[1] != 3:
            raise InvalidInputError("world points must be (n, 3)")
        if self.observations.shape[0] != self.world.shape[0]:
            raise InvalidInputError("observation count mismatch")
        if self.observations.shape[1] not in (2, 3):
            raise InvalidInputError("observations must be pixels or 3D points")
        if not (np.all(np.isfinite(self.world))
                and np.all(np.isfinite(self.observations))):
            raise InvalidInputError("correspondences must be finite")
        if self.tree_index is None:
            self.tree_index = np.zeros(len(self), dtype=np.int32)

    def __len__(self) -> int:
        return self.world.shape[0]

    @staticmethod
    def from_list(items: list[Correspondence]) -> "CorrespondenceSet":
        return CorrespondenceSet(
            world=np.array([c.world for c in items], dtype=np.float64),
            observations=np.array([c.observation for c in items],
                                  dtype=np.float64),
            tree_index=np.array([c.tree_index for c in items], dtype=np.int32),
        )


@dataclass
class RansacResult:
    pose: np.ndarray | None  # camera-to-world, None on failure
    inliers: np.ndarray  # indices into the correspondence set
    succeeded: bool
    hypotheses_generated: int = 0
    alive_history: list[int] = field(default_factory=list)

    @property
    def inlier_count(self) -> int:
        return int(self.inliers.size)


def hypothesis_residual(pose: np.ndarray, correspondence: Correspondence,
                        mode: SolveMode,
                        intrinsics: Intrinsics | None = None) -> float:
    """Per-observation residual: 3D Euclidean or reprojection distance."""
    world = np.asarray(correspondence.world, dtype=np.float64)
    obs = np.asarray(correspondence.observation, dtype=np.float64)
    if mode is SolveMode.KABSCH_3D:
        if obs.shape != (3,):
            raise InvalidInputError("3D mode expects camera-space points")
        return float(np.linalg.norm(transform_points(pose, obs) - world))
    if intrinsics is None:
        raise InvalidInputError("2D mode requires intrinsics")
    if obs.shape != (2,):
        raise InvalidInputError("2D mode expects pixel observations")
    cam = transform_points(invert_pose(pose), world)
    if cam[2] <= 1e-12:
        return np.inf
    uv, _ = project_masked(cam, intrinsics)
    return float(np.linalg.norm(uv - obs))


def _residuals(pose: np.ndarray, world: np.ndarray, obs: np.ndarray,
               mode: SolveMode, intrinsics: Intrinsics | None) -> np.ndarray:
    """Vectorized residuals of one pose over (m,) observations."""
    if mode is SolveMode.KABSCH_3D:
        return np.linalg.norm(transform_points(pose, obs) - world, axis=1)
    cam = transform_points(invert_pose(pose), world)
    uv, ok = project_masked(cam, intrinsics)
    res = np.linalg.norm(uv - obs, axis=1)
    res[~ok] = np.inf
    return res


def _solve_minimal(world: np.ndarray, obs: np.ndarray, mode: SolveMode,
                   intrinsics: Intrinsics | None) -> np.ndarray:
    if mode is SolveMode.KABSCH_3D:
        return kabsch(obs, world)
    return solve_p3p_pixels(world, obs, intrinsics)


def preemptive_ransac(correspondences: CorrespondenceSet, mode: SolveMode,
                      cfg: RansacConfig,
                      intrinsics: Intrinsics | None = None) -> RansacResult:
    """Pose estimation with block-preemptive hypothesis elimination.

    Raises InsufficientDataError below the minimal sample size; returns a
    failed (pose=None) result when the refined pose keeps fewer than the
    configured minimum number of inliers.
    """
    cfg.validate()
    n = len(correspondences)
    minimal = mode.minimal_size
    if mode is SolveMode.PNP_2D and intrinsics is None:
        raise InvalidInputError("2D mode requires intrinsics")
    expected_obs_width = 3 if mode is SolveMode.KABSCH_3D else 2
    if correspondences.observations.shape[1] != expected_obs_width:
        raise InvalidInputError("observation kind does not match mode")
    if n < minimal:
        raise InsufficientDataError(
            f"need at least {minimal} correspondences, got {n}"
        )
    world = correspondences.world
    obs = correspondences.observations
    threshold = (cfg.inlier_threshold_3d if mode is SolveMode.KABSCH_3D
                 else cfg.inlier_threshold_2d)
    rng = np.random.default_rng(cfg.rng_seed)

    poses = []
    for _ in range(cfg.hypothesis_count):
        for _ in range(_MAX_MINIMAL_RETRIES):
            pick = rng.choice(n, size=minimal, replace=False)
            try:
                pose = _solve_minimal(world[pick], obs[pick], mode, intrinsics)
            except (DegenerateConfigurationError, NoSolutionError):
                continue
            if np.all(np.isfinite(pose)):
                poses.append(pose)
                break
    if not poses:
        return RansacResult(pose=None, inliers=np.zeros(0, np.int64),
                            succeeded=False, hypotheses_generated=0)

    order = rng.permutation(n)
    rotations = np.stack([p[:3, :3] for p in poses])
    translations = np.stack([p[:3, 3] for p in poses])
    alive = np.arange(len(poses))
    scores = np.zeros(len(poses), dtype=np.int64)
    alive_history: list[int] = []
    consumed = 0
    round_index = 0
    while alive.size > 1 and consumed < n:
        block = order[consumed:consumed + cfg.block_size]
        scores[alive] += _score_block(
            rotations[alive], translations[alive], world[block], obs[block],
            mode, intrinsics, threshold,
        )
        consumed += block.size
        round_index += 1
        quota = max(1, cfg.hypothesis_count >> round_index)
        if alive.size > quota:
            # stable sort keeps earlier hypotheses on equal scores
            ranking = np.argsort(-scores[alive], kind="stable")
            alive = alive[ranking[:quota]]
            alive = np.sort(alive)
        alive_history.append(alive.size)

    best = alive[np.argmax(scores[alive])] if alive.size > 1 else alive[0]
    winner = poses[best]

    # complete rescoring so the inlier set covers every observation
    inlier_mask = _residuals(winner, world, obs, mode, intrinsics) < threshold
    refined = _refine(winner, world, obs, inlier_mask, mode, intrinsics)
    inlier_mask = _residuals(refined, world, obs, mode, intrinsics) < threshold
    inliers = np.flatnonzero(inlier_mask)

    if inliers.size < cfg.resolved_min_final_inliers(mode is SolveMode.KABSCH_3D):
        return RansacResult(pose=None, inliers=inliers, succeeded=False,
                            hypotheses_generated=len(poses),
                            alive_history=alive_history)
    return RansacResult(pose=refined, inliers=inliers, succeeded=True,
                        hypotheses_generated=len(poses),
                        alive_history=alive_history)


def _score_block(rotations: np.ndarray, translations: np.ndarray,
                 world: np.ndarray, obs: np.ndarray, mode: SolveMode,
                 intrinsics: Intrinsics | None, threshold: float) -> np.ndarray:
    """Inlier counts of each alive hypothesis over one observation block."""
    if mode is SolveMode.KABSCH_3D:
        predicted = np.einsum("aij,bj->abi", rotations, obs)
        predicted += translations[:, None, :]
        residuals = np.linalg.norm(predicted - world[None, :, :], axis=2)
        return np.count_nonzero(residuals < threshold, axis=1).astype(np.int64)
    # world -> camera for every hypothesis
    rel = world[None, :, :] - translations[:, None, :]
    cam = np.einsum("aji,abj->abi", rotations, rel)  # R^T (w - t)
    z = cam[:, :, 2]
    ok = z > 1e-12
    zs = np.where(ok, z, 1.0)
    u = intrinsics.fx * cam[:, :, 0] / zs + intrinsics.cx
    v = intrinsics.fy * cam[:, :, 1] / zs + intrinsics.cy
    du = u - obs[None, :, 0]
    dv = v - obs[None, :, 1]
    residuals = np.sqrt(du * du + dv * dv)
    return np.count_nonzero(ok & (residuals < threshold), axis=1).astype(np.int64)


def _refine(pose: np.ndarray, world: np.ndarray, obs: np.ndarray,
            inlier_mask: np.ndarray, mode: SolveMode,
            intrinsics: Intrinsics | None) -> np.ndarray:
    idx = np.flatnonzero(inlier_mask)
    if mode is SolveMode.KABSCH_3D:
        if idx.size < 3:
            return pose
        try:
            return kabsch(obs[idx], world[idx])
        except DegenerateConfigurationError:
            return pose
    if idx.size < 4:
        return pose
    refined, degenerate = refine_pose_2d3d(pose, world[idx], obs[idx],
                                           intrinsics)
    return pose if degenerate else refined
