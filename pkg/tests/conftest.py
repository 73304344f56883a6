"""Shared fixtures: tiny rendered scenes and the full-scale benchmark.

The `benchmark` fixture is expensive (a full training run on the default
synthetic scene) and is built once per session; only the end-to-end
acceptance tests request it. Everything else runs on small scenes that
render and train in seconds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace, field

import numpy as np
import pytest

from relocforest.cli import cmd_synth
from relocforest.config import ForestConfig, RunConfig, SynthConfig
from relocforest.dataset import RgbdFrame, load_intrinsics, load_split
from relocforest.forest import Forest, train_forest
from relocforest.geometry import Intrinsics, transform_points
from relocforest.pipeline import (
    SequenceMetrics,
    build_training_set,
    evaluate_sequence,
    predict_indoor_pixels,
    relocalize_sequence,
)

TINY_SYNTH = SynthConfig(train_frames=6, test_frames=2, width=80, height=60,
                         focal=75.0)
TINY_FOREST = ForestConfig(tree_count=2, max_depth=10, balanced_depth_limit=3,
                           candidates_per_node=16, thresholds_per_candidate=8)


def tiny_run_config(dataset: str, output: str) -> RunConfig:
    return replace(RunConfig(), dataset=dataset, output=output,
                   synth=TINY_SYNTH, forest=TINY_FOREST,
                   training_pixels_per_image=400, query_pixel_budget=600)


@pytest.fixture(scope="session")
def tiny_scene_dir(tmp_path_factory) -> str:
    """A small rendered dataset on disk, shared read-only by many tests."""
    root = tmp_path_factory.mktemp("tiny-scene")
    cfg = tiny_run_config(str(root), str(root / "out"))
    assert cmd_synth(cfg) == 0
    return str(root)


@dataclass
class TinyTrained:
    config: RunConfig
    intrinsics: Intrinsics
    forest: Forest
    train_frames: list[RgbdFrame]
    train_poses: list[np.ndarray]
    test_frames: list[RgbdFrame]
    test_poses: list[np.ndarray]


@pytest.fixture(scope="session")
def tiny_trained(tiny_scene_dir, tmp_path_factory) -> TinyTrained:
    """A small indoor forest trained on the tiny scene."""
    out = tmp_path_factory.mktemp("tiny-model")
    cfg = tiny_run_config(tiny_scene_dir, str(out))
    intrinsics = load_intrinsics(f"{tiny_scene_dir}/intrinsics.txt")
    _, train_frames, train_poses = load_split(tiny_scene_dir, "train")
    _, test_frames, test_poses = load_split(tiny_scene_dir, "test")
    sets = build_training_set(train_frames, train_poses, intrinsics,
                              cfg.forest, cfg.training_pixels_per_image,
                              cfg.seed)
    forest = train_forest(sets, cfg.forest)
    return TinyTrained(config=cfg, intrinsics=intrinsics, forest=forest,
                       train_frames=train_frames, train_poses=train_poses,
                       test_frames=test_frames, test_poses=test_poses)


@dataclass
class BenchmarkRun:
    config: RunConfig
    intrinsics: Intrinsics
    forest: Forest
    test_frames: list[RgbdFrame]
    test_poses: list[np.ndarray]
    metrics: dict[int, SequenceMetrics] = field(default_factory=dict)
    train_seconds: float = 0.0
    eval_seconds: float = 0.0  # at the default backtracking budget


@pytest.fixture(scope="session")
def benchmark(tmp_path_factory) -> BenchmarkRun:
    """Default-configuration benchmark: dataset, trained forest, metrics.

    Training and the default-budget evaluation are timed so the runtime
    bound can be asserted; the sweep metrics cover budgets 1, 4, and 16.
    """
    root = tmp_path_factory.mktemp("benchmark")
    cfg = replace(RunConfig(), dataset=str(root / "scene"),
                  output=str(root / "out"))
    assert cmd_synth(cfg) == 0
    intrinsics = load_intrinsics(f"{cfg.dataset}/intrinsics.txt")

    start = time.perf_counter()
    _, train_frames, train_poses = load_split(cfg.dataset, "train")
    sets = build_training_set(train_frames, train_poses, intrinsics,
                              cfg.forest, cfg.training_pixels_per_image,
                              cfg.seed)
    forest = train_forest(sets, cfg.forest)
    train_seconds = time.perf_counter() - start

    _, test_frames, test_poses = load_split(cfg.dataset, "test")
    run = BenchmarkRun(config=cfg, intrinsics=intrinsics, forest=forest,
                       test_frames=test_frames, test_poses=test_poses,
                       train_seconds=train_seconds)
    for n_max in (1, 4, 16):
        start = time.perf_counter()
        results = relocalize_sequence(forest, test_frames, intrinsics,
                                      cfg.ransac, n_max,
                                      query_budget=cfg.query_pixel_budget,
                                      seed=cfg.seed)
        elapsed = time.perf_counter() - start
        if n_max == cfg.forest.n_max:
            run.eval_seconds = elapsed
        run.metrics[n_max] = evaluate_sequence(results, test_poses)
    return run


def prediction_inlier_fraction(forest: Forest, frames: list[RgbdFrame],
                               poses: list[np.ndarray],
                               intrinsics: Intrinsics, n_max: int,
                               query_budget: int, seed: int) -> float:
    """Mean fraction of pixel predictions within 0.1 m of the true point."""
    fractions = []
    for i, (frame, pose) in enumerate(zip(frames, poses)):
        rng = np.random.default_rng(seed + i)
        _, camera_points, predictions, _ = predict_indoor_pixels(
            forest, frame, intrinsics, n_max, query_budget, rng)
        world = transform_points(pose, camera_points)
        errors = np.linalg.norm(predictions - world[None, :, :], axis=2)
        fractions.append(float((errors < 0.1).mean()))
    return float(np.mean(fractions))
