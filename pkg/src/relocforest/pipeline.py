"""Training-sample harvesting, per-frame relocalization, sequence scoring.

The indoor path pairs randomly sampled depth pixels with world labels
obtained by backprojecting through the ground-truth pose. The outdoor path
pairs detected keypoints with reconstructed 3D points projected into the
image. Both feed the same forest and the same preemptive RANSAC.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .config import ForestConfig, RansacConfig
from .dataset import KeypointSet, RgbdFrame
from .errors import EmptyFrameError, InsufficientDataError, InvalidInputError
from .features import wht_descriptors
from .forest import Forest, SampleSet, forest_predict_batch
from .geometry import (
    Intrinsics,
    backproject,
    invert_pose,
    pose_error,
    project_masked,
    transform_points,
)
from .modes import ForestMode
from .ransac import CorrespondenceSet, SolveMode, preemptive_ransac

CORRECT_TRANSLATION_M = 0.05
CORRECT_ROTATION_DEG = 5.0
OUTDOOR_DISTANCE_FILTER = 0.5


@dataclass
class RelocalizationResult:
    """Outcome of one frame. pose is present exactly when succeeded."""

    pose: np.ndarray | None
    inlier_count: int
    correspondences_used: int
    runtime_ms: float
    succeeded: bool

    def __post_init__(self) -> None:
        if self.succeeded != (self.pose is not None):
            raise InvalidInputError("pose must be present iff succeeded")


@dataclass
class SequenceMetrics:
    """Aggregate accuracy of a sequence.

    percent_correct is a fraction in [0, 1] over all frames, counting
    failures as incorrect. Medians are lower-medians over the frames that
    produced a pose, NaN when none did. Per-frame error arrays hold NaN
    for failed frames.
    """

    percent_correct: float
    median_translational: float
    median_rotational: float
    translational_errors: np.ndarray
    rotational_errors: np.ndarray
    correct: np.ndarray
    succeeded: np.ndarray

    @property
    def frame_count(self) -> int:
        return self.translational_errors.shape[0]


def _failed_result(correspondences_used: int, runtime_ms: float) -> RelocalizationResult:
    return RelocalizationResult(pose=None, inlier_count=0,
                                correspondences_used=correspondences_used,
                                runtime_ms=runtime_ms, succeeded=False)


# ---------------------------------------------------------------------------
# harvesting


def sample_valid_pixels(depth: np.ndarray, count: int,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw up to `count` distinct pixels with positive depth.

    Returns (us, vs). When fewer than `count` pixels carry depth, every
    valid pixel is returned exactly once.
    """
    vs_all, us_all = np.nonzero(depth > 0)
    n_valid = us_all.shape[0]
    if n_valid == 0:
        raise EmptyFrameError("frame has no pixels with valid depth")
    if count >= n_valid:
        return us_all.astype(np.int64), vs_all.astype(np.int64)
    pick = rng.choice(n_valid, size=count, replace=False)
    return us_all[pick].astype(np.int64), vs_all[pick].astype(np.int64)


def _harvest_arrays(rgb: np.ndarray, depth: np.ndarray, gt_pose: np.ndarray,
                    intrinsics: Intrinsics, n_pixels: int,
                    rng: np.random.Generator):
    us, vs = sample_valid_pixels(depth, n_pixels, rng)
    depth_at = depth[vs, us].astype(np.float64)
    descriptors = wht_descriptors(rgb, us, vs)
    cam = backproject(us.astype(np.float64), vs.astype(np.float64),
                      depth_at, intrinsics)
    labels = transform_points(gt_pose, cam)
    pixels = np.stack([us, vs], axis=1).astype(np.float64)
    return pixels, descriptors, labels, depth_at


def harvest_indoor_samples(frame: RgbdFrame, gt_pose: np.ndarray,
                           intrinsics: Intrinsics, n_pixels: int,
                           rng: np.random.Generator) -> SampleSet:
    """Sample depth pixels of one frame and label them with world points.

    Labels are gt_pose applied to the pixel backprojection; descriptors
    come from the frame's color image. Raises EmptyFrameError when the
    frame has no valid depth at all.
    """
    pixels, descriptors, labels, depth_at = _harvest_arrays(
        frame.rgb, frame.depth, gt_pose, intrinsics, n_pixels, rng)
    return SampleSet(
        mode=ForestMode.INDOOR_RGBD,
        pixels=pixels,
        descriptors=descriptors,
        labels=labels,
        frame_idx=np.zeros(pixels.shape[0], np.int32),
        depth_at=depth_at,
        frames_rgb=frame.rgb[None],
        frames_depth=frame.depth.astype(np.float32)[None],
    )


def build_training_set(frames: list[RgbdFrame], poses: list[np.ndarray],
                       intrinsics: Intrinsics, config: ForestConfig,
                       pixels_per_image: int, seed: int) -> list[SampleSet]:
    """Harvest one independent sample set per tree over all training frames.

    Tree t draws its pixels from a dedicated stream seeded [seed, t], so
    trees see different random subsets while the whole procedure stays
    reproducible. All sets share one frame stack to keep memory flat.
    """
    if len(frames) != len(poses):
        raise InvalidInputError("frame/pose count mismatch")
    if not frames:
        raise EmptyFrameError("no training frames")
    frames_rgb = np.stack([f.rgb for f in frames])
    frames_depth = np.stack([f.depth.astype(np.float32) for f in frames])
    sets = []
    for t in range(config.tree_count):
        rng = np.random.default_rng([seed, t])
        pixels, descriptors, labels, depth_at, frame_idx = [], [], [], [], []
        for f, (frame, pose) in enumerate(zip(frames, poses)):
            px, desc, lab, dep = _harvest_arrays(
                frame.rgb, frame.depth, pose, intrinsics,
                pixels_per_image, rng)
            pixels.append(px)
            descriptors.append(desc)
            labels.append(lab)
            depth_at.append(dep)
            frame_idx.append(np.full(px.shape[0], f, np.int32))
        sets.append(SampleSet(
            mode=ForestMode.INDOOR_RGBD,
            pixels=np.concatenate(pixels),
            descriptors=np.concatenate(descriptors),
            labels=np.concatenate(labels),
            frame_idx=np.concatenate(frame_idx),
            depth_at=np.concatenate(depth_at),
            frames_rgb=frames_rgb,
            frames_depth=frames_depth,
        ))
    return sets


def associate_sfm_points(keypoints: KeypointSet, sfm_points: np.ndarray,
                         gt_pose: np.ndarray,
                         intrinsics: Intrinsics) -> SampleSet:
    """Pair keypoints with reconstructed points that project within 1 px.

    Each keypoint considers only its nearest projected point; pairs are
    committed greedily by ascending pixel distance (ties by lower keypoint
    index) so every reconstructed point is used at most once. Unmatched
    keypoints are dropped. The result may be empty.
    """
    sfm_points = np.asarray(sfm_points, dtype=np.float64).reshape(-1, 3)
    matches: list[tuple[float, int, int]] = []
    if len(keypoints) and sfm_points.shape[0]:
        cam = transform_points(invert_pose(gt_pose), sfm_points)
        uv, ok = project_masked(cam, intrinsics)
        ok &= ((uv[:, 0] >= 0) & (uv[:, 0] <= intrinsics.width - 1)
               & (uv[:, 1] >= 0) & (uv[:, 1] <= intrinsics.height - 1))
        visible = np.nonzero(ok)[0]
        if visible.size:
            diff = keypoints.pixels[:, None, :] - uv[None, visible, :]
            dists = np.linalg.norm(diff, axis=2)
            nearest = np.argmin(dists, axis=1)
            for k in range(len(keypoints)):
                d = dists[k, nearest[k]]
                if d <= 1.0:
                    matches.append((float(d), k, int(visible[nearest[k]])))
    matches.sort()
    kp_rows, labels = [], []
    used_points: set[int] = set()
    for d, k, p in matches:
        if p in used_points:
            continue
        used_points.add(p)
        kp_rows.append(k)
        labels.append(sfm_points[p])
    kp_rows_arr = np.array(kp_rows, dtype=np.int64)
    return SampleSet(
        mode=ForestMode.OUTDOOR_RGB,
        pixels=keypoints.pixels[kp_rows_arr].reshape(-1, 2),
        descriptors=keypoints.descriptors[kp_rows_arr].reshape(
            -1, keypoints.descriptors.shape[1]),
        labels=(np.array(labels, dtype=np.float64).reshape(-1, 3)),
    )


# ---------------------------------------------------------------------------
# relocalization


def predict_indoor_pixels(forest: Forest, frame: RgbdFrame,
                          intrinsics: Intrinsics, n_max: int,
                          query_budget: int, rng: np.random.Generator):
    """Backtracked world predictions for sampled depth pixels of one frame.

    Returns (pixels (n,2) int64 u v, camera_points (n,3), predictions
    (T,n,3), distances (T,n)).
    """
    us, vs = sample_valid_pixels(frame.depth, query_budget, rng)
    depth_at = frame.depth[vs, us].astype(np.float64)
    descriptors = wht_descriptors(frame.rgb, us, vs)
    camera_points = backproject(us.astype(np.float64), vs.astype(np.float64),
                                depth_at, intrinsics)
    predictions, distances, _ = forest_predict_batch(
        forest, descriptors, n_max,
        frames_rgb=frame.rgb[None],
        frame_idx=np.zeros(us.shape[0], np.int64),
        us=us, vs=vs, depth_at=depth_at,
    )
    pixels = np.stack([us, vs], axis=1)
    return pixels, camera_points, predictions, distances


def relocalize_frame(forest: Forest, data: RgbdFrame | KeypointSet,
                     intrinsics: Intrinsics, ransac_config: RansacConfig,
                     n_max: int, query_budget: int = 5000,
                     seed: int = 1) -> RelocalizationResult:
    """Estimate one camera pose from a frame or keypoint set.

    Indoor frames contribute a Correspondence per (tree, sampled pixel)
    solved with the 3D rigid solver; keypoint sets contribute one per
    (tree, keypoint), keep only predictions with descriptor distance
    <= 0.5, and solve reprojection-style. Failure (too few usable
    correspondences, RANSAC below its inlier floor) yields a result with
    succeeded=False rather than an exception.
    """
    start = time.perf_counter()
    indoor = isinstance(data, RgbdFrame)
    expected = ForestMode.INDOOR_RGBD if indoor else ForestMode.OUTDOOR_RGB
    if forest.mode != expected:
        raise InvalidInputError(
            f"forest mode {forest.mode.name} cannot consume "
            f"{type(data).__name__}")
    per_frame_cfg = replace(ransac_config, rng_seed=seed)

    if indoor:
        try:
            _, camera_points, predictions, _ = predict_indoor_pixels(
                forest, data, intrinsics, n_max, query_budget,
                np.random.default_rng(seed))
        except EmptyFrameError:
            return _failed_result(0, _elapsed_ms(start))
        n_trees, n_points = predictions.shape[:2]
        correspondences = CorrespondenceSet(
            world=predictions.reshape(-1, 3),
            observations=np.tile(camera_points, (n_trees, 1)),
            tree_index=np.repeat(np.arange(n_trees, dtype=np.int32), n_points),
        )
        solve_mode = SolveMode.KABSCH_3D
    else:
        predictions, distances, _ = forest_predict_batch(
            forest, data.descriptors, n_max)
        n_trees, n_points = predictions.shape[:2]
        keep = (distances <= OUTDOOR_DISTANCE_FILTER).reshape(-1)
        world = predictions.reshape(-1, 3)[keep]
        observations = np.tile(data.pixels, (n_trees, 1))[keep]
        tree_index = np.repeat(np.arange(n_trees, dtype=np.int32),
                               n_points)[keep]
        if world.shape[0] < SolveMode.PNP_2D.minimal_size:
            return _failed_result(world.shape[0], _elapsed_ms(start))
        correspondences = CorrespondenceSet(world=world,
                                            observations=observations,
                                            tree_index=tree_index)
        solve_mode = SolveMode.PNP_2D

    try:
        ransac = preemptive_ransac(correspondences, solve_mode,
                                   per_frame_cfg, intrinsics=intrinsics)
    except InsufficientDataError:
        return _failed_result(len(correspondences), _elapsed_ms(start))
    return RelocalizationResult(
        pose=ransac.pose if ransac.succeeded else None,
        inlier_count=ransac.inlier_count,
        correspondences_used=len(correspondences),
        runtime_ms=_elapsed_ms(start),
        succeeded=ransac.succeeded,
    )


def _elapsed_ms(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


def relocalize_sequence(forest: Forest,
                        test_data: list[RgbdFrame] | list[KeypointSet],
                        intrinsics: Intrinsics, ransac_config: RansacConfig,
                        n_max: int, query_budget: int = 5000,
                        seed: int = 1) -> list[RelocalizationResult]:
    """Relocalize every frame independently with seed derived seed + index."""
    return [
        relocalize_frame(forest, data, intrinsics, ransac_config, n_max,
                         query_budget=query_budget, seed=seed + i)
        for i, data in enumerate(test_data)
    ]


# ---------------------------------------------------------------------------
# evaluation


def _lower_median(values: np.ndarray) -> float:
    if values.size == 0:
        return float("nan")
    return float(np.sort(values)[(values.size - 1) // 2])


def evaluate_sequence(results: list[RelocalizationResult],
                      gt_poses: list[np.ndarray]) -> SequenceMetrics:
    """Score results against ground truth at the 5 cm / 5 degree criterion."""
    if len(results) != len(gt_poses):
        raise InvalidInputError("result/ground-truth length mismatch")
    if not results:
        raise InvalidInputError("need at least one frame to evaluate")
    n = len(results)
    trans = np.full(n, np.nan)
    rot = np.full(n, np.nan)
    succeeded = np.zeros(n, dtype=bool)
    for i, (result, gt) in enumerate(zip(results, gt_poses)):
        if not result.succeeded:
            continue
        succeeded[i] = True
        trans[i], rot[i] = pose_error(result.pose, gt)
    correct = (succeeded & (trans < CORRECT_TRANSLATION_M)
               & (rot < CORRECT_ROTATION_DEG))
    return SequenceMetrics(
        percent_correct=float(np.count_nonzero(correct)) / n,
        median_translational=_lower_median(trans[succeeded]),
        median_rotational=_lower_median(rot[succeeded]),
        translational_errors=trans,
        rotational_errors=rot,
        correct=correct,
        succeeded=succeeded,
    )
