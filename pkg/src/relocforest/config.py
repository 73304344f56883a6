"""Configuration objects and the `key = value` config-file format.

Every run is fully determined by one config file: all seeds live here, so
re-running a command with the same file reproduces its outputs bit for bit
(wall-clock timing columns aside, see ``report_runtime``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import DataError, InvalidInputError
from .modes import ForestMode


@dataclass(frozen=True)
class ForestConfig:
    """Training and prediction parameters for one regression forest."""

    tree_count: int = 5
    max_depth: int = 25
    balanced_depth_limit: int = 6  # levels below this use the balanced objective
    min_leaf_samples: int = 5
    candidates_per_node: int = 64
    thresholds_per_candidate: int = 16
    n_max: int = 16  # backtracking leaf budget
    rng_seed: int = 1

    def validate(self) -> None:
        if self.tree_count < 1:
            raise InvalidInputError("tree_count must be >= 1")
        if not 0 <= self.balanced_depth_limit <= self.max_depth:
            raise InvalidInputError(
                "balanced_depth_limit must satisfy 0 <= L <= max_depth"
            )
        if self.n_max < 1:
            raise InvalidInputError("n_max must be >= 1")
        if self.min_leaf_samples < 1:
            raise InvalidInputError("min_leaf_samples must be >= 1")
        if self.candidates_per_node < 1 or self.thresholds_per_candidate < 1:
            raise InvalidInputError("candidate budgets must be >= 1")
        if self.rng_seed < 0:
            raise InvalidInputError("rng_seed must be non-negative")


@dataclass(frozen=True)
class RansacConfig:
    """Preemptive RANSAC parameters."""

    hypothesis_count: int = 256
    block_size: int = 64
    inlier_threshold_3d: float = 0.05  # meters
    inlier_threshold_2d: float = 3.0  # pixels
    rng_seed: int = 1
    # None selects the per-mode default: 10 for 3D-3D, 12 for 2D-3D.
    min_final_inliers: int | None = None

    def validate(self) -> None:
        if self.hypothesis_count < 1:
            raise InvalidInputError("hypothesis_count must be >= 1")
        if self.block_size < 1:
            raise InvalidInputError("block_size must be >= 1")
        if self.inlier_threshold_3d <= 0 or self.inlier_threshold_2d <= 0:
            raise InvalidInputError("inlier thresholds must be positive")

    def resolved_min_final_inliers(self, three_d: bool) -> int:
        if self.min_final_inliers is not None:
            return self.min_final_inliers
        return 10 if three_d else 12


@dataclass(frozen=True)
class SynthConfig:
    """Procedural scene and benchmark-trajectory parameters."""

    room_x: float = 4.0
    room_y: float = 3.0
    room_z: float = 2.5
    color_components: int = 12
    train_frames: int = 40
    test_frames: int = 20
    width: int = 320
    height: int = 240
    focal: float = 300.0


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI command needs, loadable from one text file."""

    mode: ForestMode = ForestMode.INDOOR_RGBD
    dataset: str = "./scene"
    output: str = "./out"
    model: str = ""  # empty -> <output>/forest.btrf
    report_format: str = "csv"  # text | csv | jsonl
    threads: int = 0  # 0 -> all available cores
    seed: int = 1
    training_pixels_per_image: int = 5000
    query_pixel_budget: int = 5000
    descriptor_filter: float = 0.5  # outdoor dubious-correspondence cutoff
    n_max_sweep: tuple[int, ...] = ()  # empty -> (forest.n_max,)
    report_runtime: bool = True  # False zeroes timing columns for bit-stable reports
    forest: ForestConfig = field(default_factory=ForestConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> None:
        self.forest.validate()
        self.ransac.validate()
        if self.report_format not in ("text", "csv", "jsonl"):
            raise InvalidInputError(f"unknown report_format: {self.report_format}")
        if self.training_pixels_per_image < 1 or self.query_pixel_budget < 1:
            raise InvalidInputError("pixel budgets must be >= 1")

    def model_path(self) -> Path:
        if self.model:
            return Path(self.model)
        return Path(self.output) / "forest.btrf"

    def sweep(self) -> tuple[int, ...]:
        return self.n_max_sweep if self.n_max_sweep else (self.forest.n_max,)


# Flat config-file key -> (section, field). Section "" means RunConfig itself.
_KEYMAP: dict[str, tuple[str, str]] = {}
for _f in fields(RunConfig):
    if _f.name in ("forest", "ransac", "synth"):
        continue
    _KEYMAP[_f.name] = ("", _f.name)
for _section, _cls in (("forest", ForestConfig), ("ransac", RansacConfig)):
    for _f in fields(_cls):
        _KEYMAP[_f.name] = (_section, _f.name)
for _f in fields(SynthConfig):
    _KEYMAP["synth_" + _f.name] = ("synth", _f.name)


def _parse_value(key: str, field_type: object, raw: str):
    raw = raw.strip()
    try:
        if key == "mode":
            return ForestMode.INDOOR_RGBD if raw == "indoor" else (
                ForestMode.OUTDOOR_RGB if raw == "outdoor" else _bad_mode(raw)
            )
        if key == "n_max_sweep":
            if not raw:
                return ()
            return tuple(int(tok) for tok in raw.replace(",", " ").split())
        if key == "min_final_inliers":
            return None if raw in ("", "auto") else int(raw)
        if key == "report_runtime":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if field_type is int or field_type == "int":
            return int(raw)
        if field_type is float or field_type == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise DataError(f"config key '{key}': cannot parse value '{raw}'") from exc


def _bad_mode(raw: str):
    raise DataError(f"config key 'mode': expected 'indoor' or 'outdoor', got '{raw}'")


def _field_type(section: str, name: str):
    cls = {"": RunConfig, "forest": ForestConfig, "ransac": RansacConfig,
           "synth": SynthConfig}[section]
    for f in fields(cls):
        if f.name == name:
            return f.type
    raise KeyError(name)


def parse_config_text(text: str, path: str = "<config>") -> RunConfig:
    """Parse `key = value` lines (# comments, blank lines allowed)."""
    top: dict[str, object] = {}
    sections: dict[str, dict[str, object]] = {"forest": {}, "ransac": {}, "synth": {}}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise DataError(f"{path}:{lineno}: expected 'key = value', got '{stripped}'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _KEYMAP:
            raise DataError(f"{path}:{lineno}: unknown config key '{key}'")
        section, name = _KEYMAP[key]
        value = _parse_value(key, _field_type(section, name), raw)
        if section:
            sections[section][name] = value
        else:
            top[name] = value
    cfg = RunConfig(
        forest=ForestConfig(**sections["forest"]),
        ransac=RansacConfig(**sections["ransac"]),
        synth=SynthConfig(**sections["synth"]),
        **top,
    )
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"config file not found: {p}")
    return parse_config_text(p.read_text(), str(p))


def format_config(cfg: RunConfig) -> str:
    """Render a config as canonical `key = value` text (parseable back)."""
    lines = ["# relocforest run configuration"]
    mode = "indoor" if cfg.mode == ForestMode.INDOOR_RGBD else "outdoor"
    lines.append(f"mode = {mode}")
    for name in ("dataset", "output", "model", "report_format", "threads", "seed",
                 "training_pixels_per_image", "query_pixel_budget",
                 "descriptor_filter"):
        lines.append(f"{name} = {getattr(cfg, name)}")
    lines.append("n_max_sweep = " + ",".join(str(n) for n in cfg.n_max_sweep))
    lines.append(f"report_runtime = {'true' if cfg.report_runtime else 'false'}")
    lines.append("")
    lines.append("# forest")
    for f in fields(ForestConfig):
        lines.append(f"{f.name} = {getattr(cfg.forest, f.name)}")
    lines.append("")
    lines.append("# ransac")
    for f in fields(RansacConfig):
        value = getattr(cfg.ransac, f.name)
        lines.append(f"{f.name} = {'auto' if value is None else value}")
    lines.append("")
    lines.append("# synthetic scene")
    for f in fields(SynthConfig):
        lines.append(f"synth_{f.name} = {getattr(cfg.synth, f.name)}")
    lines.append("")
    return "\n".join(lines)


def with_overrides(cfg: RunConfig, **kwargs) -> RunConfig:
    """Replace top-level RunConfig fields, dropping None values."""
    updates = {k: v for k, v in kwargs.items() if v is not None}
    return replace(cfg, **updates) if updates else cfg
