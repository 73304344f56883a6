"""Command-line interface: config files, subcommands, exit codes."""

import json
import shutil
from dataclasses import replace

import numpy as np
import pytest

import relocforest.cli as cli
from relocforest.cli import EXIT_ALL_FAILED, EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from relocforest.config import (
    ForestConfig,
    RansacConfig,
    RunConfig,
    SynthConfig,
    format_config,
    load_config,
    parse_config_text,
)
from relocforest.dataset import frame_indices, load_pose
from relocforest.errors import DataError, InvalidInputError
from relocforest.modes import ForestMode

# big enough to relocalize unseen views of the scene, small enough to train
# in about a second; the loose inlier threshold suits the coarse forest
CLI_SYNTH = SynthConfig(train_frames=20, test_frames=2, width=96, height=72,
                        focal=90.0)
CLI_FOREST = ForestConfig(tree_count=2, max_depth=12, balanced_depth_limit=4,
                          candidates_per_node=24, thresholds_per_candidate=8)
CLI_RANSAC = RansacConfig(inlier_threshold_3d=0.1)


class TestConfigText:
    def test_default_round_trip(self):
        cfg = RunConfig()
        assert parse_config_text(format_config(cfg)) == cfg

    def test_modified_round_trip(self):
        cfg = replace(
            RunConfig(),
            mode=ForestMode.OUTDOOR_RGB,
            dataset="/data/scene",
            model="/tmp/m.btrf",
            report_format="jsonl",
            seed=42,
            n_max_sweep=(1, 4, 16),
            report_runtime=False,
            forest=replace(ForestConfig(), tree_count=3, n_max=8),
            ransac=replace(RunConfig().ransac, min_final_inliers=25),
            synth=replace(SynthConfig(), width=100),
        )
        assert parse_config_text(format_config(cfg)) == cfg

    def test_comments_and_blanks(self):
        cfg = parse_config_text("# hello\n\nseed = 9  # trailing comment\n")
        assert cfg.seed == 9

    def test_auto_min_final_inliers(self):
        cfg = parse_config_text("min_final_inliers = auto\n")
        assert cfg.ransac.min_final_inliers is None
        cfg = parse_config_text("min_final_inliers = 30\n")
        assert cfg.ransac.min_final_inliers == 30

    def test_boolean_spellings(self):
        for raw, expected in (("true", True), ("YES", True), ("1", True),
                              ("false", False), ("No", False), ("0", False)):
            cfg = parse_config_text(f"report_runtime = {raw}\n")
            assert cfg.report_runtime is expected
        with pytest.raises(DataError):
            parse_config_text("report_runtime = maybe\n")

    def test_parse_errors_carry_location(self):
        with pytest.raises(DataError, match="run.cfg:2"):
            parse_config_text("seed = 1\nwat\n", path="run.cfg")
        with pytest.raises(DataError, match="unknown config key"):
            parse_config_text("not_a_key = 5\n")
        with pytest.raises(DataError, match="cannot parse"):
            parse_config_text("seed = banana\n")
        with pytest.raises(DataError, match="indoor"):
            parse_config_text("mode = sideways\n")

    def test_validation_applies(self):
        with pytest.raises(InvalidInputError):
            parse_config_text("query_pixel_budget = 0\n")
        with pytest.raises(InvalidInputError):
            parse_config_text("report_format = yaml\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_config(tmp_path / "none.cfg")


class TestUsage:
    def test_no_subcommand(self, capsys):
        assert main([]) == EXIT_USAGE
        assert "subcommand" in capsys.readouterr().err

    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_print_defaults_round_trips(self, capsys):
        assert main(["--print-defaults"]) == EXIT_OK
        printed = capsys.readouterr().out
        assert parse_config_text(printed) == RunConfig()

    def test_bad_override_shape(self, capsys):
        assert main(["train", "--set", "nonsense"]) == EXIT_DATA
        assert "key=value" in capsys.readouterr().err

    def test_unknown_override_key(self, capsys):
        assert main(["train", "--set", "warp_speed=9"]) == EXIT_DATA

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "no.cfg")]) == EXIT_DATA
        assert "not found" in capsys.readouterr().err


@pytest.fixture(scope="module")
def cli_workspace(tmp_path_factory):
    """A rendered scene and a trained model produced via the CLI."""
    root = tmp_path_factory.mktemp("cli")
    cfg = replace(RunConfig(), dataset=str(root / "scene"),
                  output=str(root / "out"), synth=CLI_SYNTH,
                  forest=CLI_FOREST, ransac=CLI_RANSAC,
                  training_pixels_per_image=600,
                  query_pixel_budget=800, report_runtime=False, seed=5)
    config_path = root / "run.cfg"
    config_path.write_text(format_config(cfg))
    assert main(["synth", "--config", str(config_path)]) == EXIT_OK
    assert main(["train", "--config", str(config_path)]) == EXIT_OK
    return root, config_path, cfg


class TestSynthCommand:
    def test_dataset_layout(self, cli_workspace):
        root, _, cfg = cli_workspace
        scene = root / "scene"
        assert (scene / "intrinsics.txt").is_file()
        assert frame_indices(scene / "train") == list(range(20))
        assert frame_indices(scene / "test") == list(range(2))
        pose = load_pose(scene / "test" / "frame-000001.pose.txt")
        assert pose.shape == (4, 4)


class TestTrainCommand:
    def test_model_and_manifest(self, cli_workspace):
        root, _, cfg = cli_workspace
        model = root / "out" / "forest.btrf"
        manifest_path = root / "out" / "forest.manifest.json"
        assert model.is_file()
        manifest = json.loads(manifest_path.read_text())
        assert manifest["mode"] == "indoor"
        assert manifest["training_frames"] == 20
        assert manifest["samples_per_tree"] == [20 * 600] * 2
        assert len(manifest["trees"]) == 2
        for tree in manifest["trees"]:
            histogram = tree["leaf_depth_histogram"]
            assert sum(histogram.values()) == tree["leaves"]
            assert sum(r["leaves"] for r in tree["levels"]) == tree["leaves"]
            splits = sum(r["splits"] for r in tree["levels"])
            assert splits + tree["leaves"] == tree["nodes"]

    def test_manifest_is_path_free(self, cli_workspace):
        root, config_path, cfg = cli_workspace
        text = (root / "out" / "forest.manifest.json").read_text()
        assert str(root) not in text

    def test_manifest_reproducible_across_output_dirs(self, cli_workspace,
                                                      tmp_path):
        root, config_path, cfg = cli_workspace
        assert main(["train", "--config", str(config_path),
                     "--output", str(tmp_path)]) == EXIT_OK
        original = (root / "out" / "forest.manifest.json").read_bytes()
        relocated = (tmp_path / "forest.manifest.json").read_bytes()
        assert original == relocated

    def test_tree_count_override(self, cli_workspace, tmp_path, capsys):
        _, config_path, _ = cli_workspace
        assert main(["train", "--config", str(config_path),
                     "--output", str(tmp_path),
                     "--set", "tree_count=1"]) == EXIT_OK
        manifest = json.loads((tmp_path / "forest.manifest.json").read_text())
        assert len(manifest["trees"]) == 1

    def test_missing_pose_file_names_frame(self, cli_workspace, tmp_path,
                                           capsys):
        root, config_path, cfg = cli_workspace
        broken = tmp_path / "scene"
        shutil.copytree(root / "scene", broken)
        (broken / "train" / "frame-000002.pose.txt").unlink()
        code = main(["train", "--config", str(config_path),
                     "--dataset", str(broken),
                     "--output", str(tmp_path / "out")])
        assert code == EXIT_DATA
        assert "frame-000002.pose.txt" in capsys.readouterr().err


class TestRelocalizeCommand:
    def test_outputs_and_suppressed_runtime(self, cli_workspace, tmp_path):
        root, config_path, cfg = cli_workspace
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        model = str(root / "out" / "forest.btrf")
        for out in (out_a, out_b):
            code = main(["relocalize", "--config", str(config_path),
                         "--model", model, "--output", str(out)])
            assert code == EXIT_OK
        csv_a = (out_a / "relocalize.csv").read_text()
        lines = csv_a.strip().split("\n")
        assert lines[0] == "frame,succeeded,inliers,correspondences,runtime_ms"
        assert len(lines) == 3
        for line in lines[1:]:
            assert line.split(",")[4] == "0.0"
        # identical inputs and zeroed timing make reruns byte-identical
        assert csv_a == (out_b / "relocalize.csv").read_text()
        poses_a = sorted(p.name for p in (out_a / "poses").iterdir())
        assert poses_a
        for name in poses_a:
            assert (out_a / "poses" / name).read_bytes() == \
                (out_b / "poses" / name).read_bytes()


class TestEvaluateCommand:
    def test_reports_written(self, cli_workspace, tmp_path, capsys):
        root, config_path, cfg = cli_workspace
        out = tmp_path / "eval"
        code = main(["evaluate", "--config", str(config_path),
                     "--model", str(root / "out" / "forest.btrf"),
                     "--output", str(out)])
        assert code == EXIT_OK
        n_max = cfg.forest.n_max
        report = out / f"report-nmax{n_max:02d}.csv"
        assert report.is_file()
        body = report.read_text().strip().split("\n")
        assert len(body) == 1 + 2  # header + one row per test frame
        assert (out / f"poses-nmax{n_max:02d}.txt").is_file()
        summary = (out / "summary.csv").read_text().strip().split("\n")
        assert len(summary) == 2
        assert summary[1].split(",")[0] == str(n_max)
        assert f"n_max={n_max}" in capsys.readouterr().out

    def test_sweep_override(self, cli_workspace, tmp_path):
        root, config_path, cfg = cli_workspace
        out = tmp_path / "sweep"
        code = main(["evaluate", "--config", str(config_path),
                     "--model", str(root / "out" / "forest.btrf"),
                     "--output", str(out),
                     "--set", "n_max_sweep=1,4"])
        assert code == EXIT_OK
        assert (out / "report-nmax01.csv").is_file()
        assert (out / "report-nmax04.csv").is_file()
        summary = (out / "summary.csv").read_text().strip().split("\n")
        assert [line.split(",")[0] for line in summary] == ["n_max", "1", "4"]

    def test_mode_mismatch(self, cli_workspace, tmp_path, capsys):
        root, config_path, _ = cli_workspace
        code = main(["evaluate", "--config", str(config_path),
                     "--model", str(root / "out" / "forest.btrf"),
                     "--output", str(tmp_path),
                     "--set", "mode=outdoor"])
        assert code == EXIT_DATA
        assert "does not match" in capsys.readouterr().err

    def test_all_frames_failing_exit_code(self, cli_workspace, tmp_path):
        root, config_path, _ = cli_workspace
        code = main(["evaluate", "--config", str(config_path),
                     "--model", str(root / "out" / "forest.btrf"),
                     "--output", str(tmp_path),
                     "--set", "min_final_inliers=100000"])
        assert code == EXIT_ALL_FAILED

    def test_ground_truth_loaded_after_estimation(self, cli_workspace,
                                                  tmp_path, monkeypatch):
        root, config_path, _ = cli_workspace
        events = []
        real_reloc = cli.relocalize_sequence
        real_load = cli.load_frame_pose

        def spy_reloc(*args, **kwargs):
            events.append("estimate")
            return real_reloc(*args, **kwargs)

        def spy_load(directory, index):
            events.append("ground-truth")
            return real_load(directory, index)

        monkeypatch.setattr(cli, "relocalize_sequence", spy_reloc)
        monkeypatch.setattr(cli, "load_frame_pose", spy_load)
        code = main(["evaluate", "--config", str(config_path),
                     "--model", str(root / "out" / "forest.btrf"),
                     "--output", str(tmp_path),
                     "--set", "n_max_sweep=1,4"])
        assert code in (EXIT_OK, EXIT_ALL_FAILED)
        assert events[0] == "estimate"
        first_gt = events.index("ground-truth")
        assert events[:first_gt] == ["estimate"]
        assert events.count("estimate") == 2
        assert events.count("ground-truth") == 2  # one per test frame, once


class TestInspectCommand:
    def test_statistics_printed(self, cli_workspace, capsys):
        root, config_path, _ = cli_workspace
        code = main(["inspect", "--config", str(config_path),
                     "--model", str(root / "out" / "forest.btrf")])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "mode: indoor; trees: 2" in out
        assert "balanced" in out
        assert "tree 1:" in out

    def test_missing_model(self, cli_workspace, tmp_path, capsys):
        _, config_path, _ = cli_workspace
        code = main(["inspect", "--config", str(config_path),
                     "--model", str(tmp_path / "ghost.btrf")])
        assert code == EXIT_DATA


class TestConsoleEntryPoint:
    def test_installed_script(self):
        import subprocess
        proc = subprocess.run(["relocforest", "--print-defaults"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert parse_config_text(proc.stdout) == RunConfig()
