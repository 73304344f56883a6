"""Command-line entry points.

Subcommands: synth (write a procedural dataset), train, relocalize,
evaluate (metrics against ground truth, optional backtracking-budget
sweep), inspect (model statistics). Every command is driven by one
`key = value` config file plus optional overrides, so a run is fully
reproducible from its config.

Exit codes: 0 success, 1 usage error, 2 data or input error,
3 relocalization failed on every frame.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import RunConfig, format_config, parse_config_text
from .dataset import (
    frame_indices,
    load_frame_pose,
    load_intrinsics,
    load_keypoints,
    load_points3d,
    load_rgbd_frame,
    save_intrinsics,
    save_pose,
    save_rgbd_frame,
    scene_split_dir,
)
from .errors import DataError, InvalidInputError, RelocForestError
from .forest import SampleSet, load_forest, save_forest, train_forest
from .forest.tree import OBJECTIVE_BALANCED, LeafNode, RegressionTree, SplitNode
from .modes import ForestMode
from .pipeline import (
    associate_sfm_points,
    build_training_set,
    evaluate_sequence,
    relocalize_sequence,
)
from .report import (
    build_rows,
    format_pose_dump,
    format_summary_csv,
    format_summary_text,
    summary_row,
    write_report,
)
from .synth import default_intrinsics, make_scene, render_frame, sample_trajectory

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ALL_FAILED = 3

_REPORT_EXT = {"text": "txt", "csv": "csv", "jsonl": "jsonl"}


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE",
                        help="run configuration file (key = value lines)")
    parser.add_argument("--set", metavar="KEY=VALUE", action="append",
                        default=[], dest="overrides",
                        help="override one config key (repeatable)")
    parser.add_argument("--dataset", help="scene directory")
    parser.add_argument("--output", help="output directory")
    parser.add_argument("--model", help="model file path")
    parser.add_argument("--seed", type=int, help="root random seed")
    parser.add_argument("--threads", type=int,
                        help="worker-thread bound (frames are processed "
                             "sequentially for determinism)")


def build_parser() -> _Parser:
    parser = _Parser(prog="relocforest",
                     description="camera relocalization with regression forests")
    parser.add_argument("--print-defaults", action="store_true",
                        help="print the default configuration and exit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands = (
        ("synth", cmd_synth, "write a procedural RGB-D dataset"),
        ("train", cmd_train, "train a forest on the train split"),
        ("relocalize", cmd_relocalize, "estimate test-split poses"),
        ("evaluate", cmd_evaluate, "estimate poses and score against ground truth"),
        ("inspect", cmd_inspect, "print statistics of a saved model"),
    )
    for name, func, help_text in commands:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.set_defaults(func=func)
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    text = ""
    source = "<defaults>"
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise DataError(f"config file not found: {path}")
        text = path.read_text()
        source = str(path)
    extra = list(args.overrides)
    for key in ("dataset", "output", "model", "seed", "threads"):
        value = getattr(args, key)
        if value is not None:
            extra.append(f"{key} = {value}")
    for line in extra:
        if "=" not in line:
            raise DataError(f"override must look like key=value: '{line}'")
    if extra:
        text += "\n" + "\n".join(extra) + "\n"
    return parse_config_text(text, source)


# ---------------------------------------------------------------------------
# dataset loading shared by commands


def _load_frames(cfg: RunConfig, split: str):
    split_dir = scene_split_dir(cfg.dataset, split)
    indices = frame_indices(split_dir)
    if not indices:
        raise InvalidInputError(f"no frames found under {split_dir}")
    frames = [load_rgbd_frame(split_dir, i) for i in indices]
    return split_dir, indices, frames


def _load_keypoint_files(cfg: RunConfig, split: str):
    split_dir = Path(cfg.dataset) / split
    if not split_dir.is_dir():
        raise DataError(f"missing split directory: {split_dir}")
    paths = sorted(split_dir.glob("frame-*.keys"))
    if not paths:
        raise InvalidInputError(f"no keypoint files under {split_dir}")
    indices = [int(p.name[len("frame-"):len("frame-") + 6]) for p in paths]
    keys = [load_keypoints(p) for p in paths]
    return split_dir, indices, keys


def _load_test_data(cfg: RunConfig):
    if cfg.mode == ForestMode.INDOOR_RGBD:
        return _load_frames(cfg, "test")
    return _load_keypoint_files(cfg, "test")


def _scene_intrinsics(cfg: RunConfig):
    return load_intrinsics(Path(cfg.dataset) / "intrinsics.txt")


# ---------------------------------------------------------------------------
# commands


def cmd_synth(cfg: RunConfig) -> int:
    scene = make_scene(cfg.synth, cfg.seed)
    intrinsics = default_intrinsics(cfg.synth)
    train_poses, test_poses = sample_trajectory(
        scene, cfg.synth.train_frames, cfg.synth.test_frames, cfg.seed)
    root = Path(cfg.dataset)
    root.mkdir(parents=True, exist_ok=True)
    save_intrinsics(root / "intrinsics.txt", intrinsics)
    for split, poses in (("train", train_poses), ("test", test_poses)):
        directory = root / split
        for i, pose in enumerate(poses):
            rgb, depth, _ = render_frame(scene, pose, intrinsics)
            save_rgbd_frame(directory, i, rgb, depth, pose)
    print(f"wrote {len(train_poses)} train / {len(test_poses)} test frames "
          f"to {root}")
    return EXIT_OK


def _tree_level_table(tree: RegressionTree) -> list[dict]:
    """Split/leaf counts per depth plus the objective active there."""
    rows: dict[int, dict] = {}
    stack: list[tuple[SplitNode | LeafNode, int]] = [(tree.root, 0)]
    while stack:
        node, depth = stack.pop()
        row = rows.setdefault(depth,
                              {"depth": depth, "splits": 0, "leaves": 0,
                               "objective": ""})
        if isinstance(node, SplitNode):
            row["splits"] += 1
            row["objective"] = ("balanced"
                                if node.objective_id == OBJECTIVE_BALANCED
                                else "variance")
            stack.append((node.right, depth + 1))
            stack.append((node.left, depth + 1))
        else:
            row["leaves"] += 1
    return [rows[d] for d in sorted(rows)]


def _training_manifest(cfg: RunConfig, forest, sample_counts: list[int],
                       frame_count: int) -> dict:
    trees = []
    for tree in forest.trees:
        levels = _tree_level_table(tree)
        trees.append({
            "nodes": tree.node_count(),
            "leaves": sum(r["leaves"] for r in levels),
            "max_leaf_depth": max(tree.depth_histogram()),
            "leaf_depth_histogram": {str(k): v
                                     for k, v in tree.depth_histogram().items()},
            "levels": levels,
        })
    return {
        "mode": "indoor" if cfg.mode == ForestMode.INDOOR_RGBD else "outdoor",
        "seed": cfg.seed,
        "forest_config": asdict(cfg.forest),
        "training_frames": frame_count,
        "samples_per_tree": sample_counts,
        "trees": trees,
    }


def cmd_train(cfg: RunConfig) -> int:
    intrinsics = _scene_intrinsics(cfg)
    if cfg.mode == ForestMode.INDOOR_RGBD:
        split_dir, indices, frames = _load_frames(cfg, "train")
        poses = [load_frame_pose(split_dir, i) for i in indices]
        sets = build_training_set(frames, poses, intrinsics, cfg.forest,
                                  cfg.training_pixels_per_image, cfg.seed)
        frame_count = len(frames)
    else:
        split_dir, indices, keys = _load_keypoint_files(cfg, "train")
        points = load_points3d(Path(cfg.dataset) / "points3d.txt")
        parts = []
        for i, key_set in zip(indices, keys):
            pose = load_frame_pose(split_dir, i)
            parts.append(associate_sfm_points(key_set, points, pose, intrinsics))
        merged = SampleSet.concatenate(parts)
        if not len(merged):
            raise DataError("no keypoint/3D-point associations within 1 px")
        sets = [merged] * cfg.forest.tree_count
        frame_count = len(keys)

    forest = train_forest(sets, cfg.forest)
    model_path = cfg.model_path()
    model_path.parent.mkdir(parents=True, exist_ok=True)
    save_forest(forest, model_path)
    manifest = _training_manifest(cfg, forest, [len(s) for s in sets],
                                  frame_count)
    manifest_path = model_path.with_suffix(".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True)
                             + "\n")
    for t, info in enumerate(manifest["trees"]):
        print(f"tree {t}: {info['nodes']} nodes, {info['leaves']} leaves, "
              f"max leaf depth {info['max_leaf_depth']}")
    print(f"model written to {model_path}")
    return EXIT_OK


def _check_mode(cfg: RunConfig, forest) -> None:
    if forest.mode != cfg.mode:
        raise InvalidInputError(
            f"model mode {forest.mode.name} does not match configured "
            f"mode {cfg.mode.name}")


def cmd_relocalize(cfg: RunConfig) -> int:
    forest = load_forest(cfg.model_path())
    _check_mode(cfg, forest)
    intrinsics = _scene_intrinsics(cfg)
    split_dir, indices, data = _load_test_data(cfg)
    results = relocalize_sequence(forest, data, intrinsics, cfg.ransac,
                                  cfg.forest.n_max,
                                  query_budget=cfg.query_pixel_budget,
                                  seed=cfg.seed)
    out_dir = Path(cfg.output)
    pose_dir = out_dir / "poses"
    pose_dir.mkdir(parents=True, exist_ok=True)
    lines = ["frame,succeeded,inliers,correspondences,runtime_ms"]
    for frame_id, result in zip(indices, results):
        if result.succeeded:
            save_pose(pose_dir / f"frame-{frame_id:06d}.pose.txt", result.pose)
        runtime = result.runtime_ms if cfg.report_runtime else 0.0
        lines.append(f"{frame_id},{int(result.succeeded)},"
                     f"{result.inlier_count},{result.correspondences_used},"
                     f"{runtime!r}")
    (out_dir / "relocalize.csv").write_text("\n".join(lines) + "\n")
    n_ok = sum(r.succeeded for r in results)
    print(f"{n_ok}/{len(results)} frames relocalized; poses in {pose_dir}")
    return EXIT_OK if n_ok else EXIT_ALL_FAILED


def cmd_evaluate(cfg: RunConfig) -> int:
    forest = load_forest(cfg.model_path())
    _check_mode(cfg, forest)
    intrinsics = _scene_intrinsics(cfg)
    split_dir, indices, data = _load_test_data(cfg)
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = _REPORT_EXT[cfg.report_format]
    summaries = []
    any_succeeded = False
    gt_poses: list[np.ndarray] | None = None
    for n_max in cfg.sweep():
        results = relocalize_sequence(forest, data, intrinsics, cfg.ransac,
                                      n_max,
                                      query_budget=cfg.query_pixel_budget,
                                      seed=cfg.seed)
        if gt_poses is None:
            # ground truth is read only after pose estimation has finished
            gt_poses = [load_frame_pose(split_dir, i) for i in indices]
        metrics = evaluate_sequence(results, gt_poses)
        rows = build_rows(results, metrics, cfg.report_runtime)
        summary = summary_row(n_max, results, metrics, cfg.report_runtime)
        write_report(out_dir / f"report-nmax{n_max:02d}.{ext}",
                     cfg.report_format, rows, summary)
        (out_dir / f"poses-nmax{n_max:02d}.txt").write_text(
            format_pose_dump(results, gt_poses))
        summaries.append(summary)
        any_succeeded = any_succeeded or bool(np.any(metrics.succeeded))
    (out_dir / "summary.csv").write_text(format_summary_csv(summaries))
    print(format_summary_text(summaries), end="")
    return EXIT_OK if any_succeeded else EXIT_ALL_FAILED


def cmd_inspect(cfg: RunConfig) -> int:
    forest = load_forest(cfg.model_path())
    mode = "indoor" if forest.mode == ForestMode.INDOOR_RGBD else "outdoor"
    print(f"model: {cfg.model_path()}")
    print(f"mode: {mode}; trees: {forest.tree_count}; "
          f"descriptor length: {forest.descriptor_length}")
    fc = forest.config
    print(f"max_depth={fc.max_depth} balanced_depth_limit="
          f"{fc.balanced_depth_limit} min_leaf_samples={fc.min_leaf_samples} "
          f"candidates={fc.candidates_per_node}x{fc.thresholds_per_candidate} "
          f"n_max={fc.n_max}")
    for t, tree in enumerate(forest.trees):
        levels = _tree_level_table(tree)
        leaves = sum(r["leaves"] for r in levels)
        print(f"tree {t}: {tree.node_count()} nodes, {leaves} leaves")
        print(f"  {'depth':>5} {'objective':>10} {'splits':>7} {'leaves':>7}")
        for row in levels:
            print(f"  {row['depth']:>5d} {row['objective'] or '-':>10} "
                  f"{row['splits']:>7d} {row['leaves']:>7d}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.print_defaults:
        print(format_config(RunConfig()), end="")
        return EXIT_OK
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: a subcommand is required",
              file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _resolve_config(args)
        return args.func(cfg)
    except RelocForestError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
