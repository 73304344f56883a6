"""On-disk dataset layout.

A scene directory holds `train/` and `test/` splits plus one shared
`intrinsics.txt` (`fx fy cx cy width height`). Each frame in a split is

    frame-%06d.color.png   8-bit RGB
    frame-%06d.depth.png   16-bit grayscale, millimeters, 0 = no depth
    frame-%06d.pose.txt    16 numbers, row-major 4x4 camera-to-world

Outdoor scenes replace the depth images with `frame-%06d.keys` keypoint
files and a scene-level `points3d.txt` (one `x y z` per line).
"""

from __future__ import annotations

import io
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, EmptyFrameError, InvalidInputError
from .features import normalize_descriptors
from .geometry import Intrinsics, validate_pose

_FRAME_RE = re.compile(r"frame-(\d{6})\.color\.png$")
KEYS_MAGIC = b"BKPT"
KEYS_VERSION = 1
KEYS_DIM = 64


@dataclass
class RgbdFrame:
    """One RGB-D frame held in memory; depth is meters with 0 = invalid."""

    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float
    name: str = ""

    def __post_init__(self) -> None:
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise InvalidInputError("rgb must be (H, W, 3)")
        if self.depth.shape != self.rgb.shape[:2]:
            raise InvalidInputError("depth size must match rgb")
        if np.any(self.depth < 0):
            raise InvalidInputError("depth cannot be negative")

    def valid_mask(self) -> np.ndarray:
        return self.depth > 0


@dataclass
class KeypointSet:
    """Keypoints of one image with unit-norm descriptors."""

    pixels: np.ndarray  # (n, 2) float64
    descriptors: np.ndarray  # (n, 64) float64, unit L2
    name: str = ""

    def __len__(self) -> int:
        return self.pixels.shape[0]


# ---------------------------------------------------------------------------
# scalar files


def save_intrinsics(path: str | Path, intrinsics: Intrinsics) -> None:
    Path(path).write_text(
        f"{float(intrinsics.fx)!r} {float(intrinsics.fy)!r} "
        f"{float(intrinsics.cx)!r} {float(intrinsics.cy)!r} "
        f"{int(intrinsics.width)} {int(intrinsics.height)}\n"
    )


def load_intrinsics(path: str | Path) -> Intrinsics:
    path = Path(path)
    try:
        tokens = path.read_text().split()
    except OSError as exc:
        raise DataError(f"cannot read intrinsics file {path}: {exc}") from exc
    if len(tokens) != 6:
        raise DataError(f"{path}: expected 6 values, got {len(tokens)}")
    try:
        fx, fy, cx, cy = (float(t) for t in tokens[:4])
        width, height = int(tokens[4]), int(tokens[5])
    except ValueError as exc:
        raise DataError(f"{path}: malformed intrinsics") from exc
    return Intrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)


def save_pose(path: str | Path, pose: np.ndarray) -> None:
    rows = [" ".join(repr(float(v)) for v in row) for row in np.asarray(pose)]
    Path(path).write_text("\n".join(rows) + "\n")


def load_pose(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        tokens = path.read_text().split()
    except OSError as exc:
        raise DataError(f"cannot read pose file {path}: {exc}") from exc
    if len(tokens) != 16:
        raise DataError(f"{path}: expected 16 values, got {len(tokens)}")
    try:
        values = np.array([float(t) for t in tokens]).reshape(4, 4)
    except ValueError as exc:
        raise DataError(f"{path}: malformed pose") from exc
    try:
        return validate_pose(values)
    except InvalidInputError as exc:
        raise DataError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# frames


def save_rgbd_frame(directory: str | Path, index: int, rgb: np.ndarray,
                    depth_m: np.ndarray, pose: np.ndarray) -> None:
    """Write color PNG, 16-bit millimeter depth PNG, and pose text."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = directory / f"frame-{index:06d}"
    Image.fromarray(np.ascontiguousarray(rgb)).save(f"{stem}.color.png")
    depth_mm = np.clip(np.rint(np.asarray(depth_m) * 1000.0), 0, 65535)
    Image.fromarray(depth_mm.astype(np.uint16)).save(f"{stem}.depth.png")
    save_pose(f"{stem}.pose.txt", pose)


def load_rgbd_frame(directory: str | Path, index: int) -> RgbdFrame:
    stem = Path(directory) / f"frame-{index:06d}"
    color_path = Path(f"{stem}.color.png")
    depth_path = Path(f"{stem}.depth.png")
    if not color_path.is_file():
        raise DataError(f"missing color image: {color_path}")
    if not depth_path.is_file():
        raise DataError(f"missing depth image: {depth_path}")
    rgb = np.asarray(Image.open(color_path).convert("RGB"))
    depth_raw = np.asarray(Image.open(depth_path))
    if depth_raw.dtype not in (np.uint16, np.int32, np.uint8):
        raise DataError(f"{depth_path}: unsupported depth dtype {depth_raw.dtype}")
    depth = depth_raw.astype(np.float64) / 1000.0
    return RgbdFrame(rgb=rgb, depth=depth, name=f"frame-{index:06d}")


def frame_indices(split_dir: str | Path) -> list[int]:
    """Sorted frame numbers present in a split directory."""
    split_dir = Path(split_dir)
    if not split_dir.is_dir():
        raise DataError(f"missing split directory: {split_dir}")
    indices = []
    for entry in split_dir.iterdir():
        match = _FRAME_RE.search(entry.name)
        if match:
            indices.append(int(match.group(1)))
    return sorted(indices)


def load_frame_pose(directory: str | Path, index: int) -> np.ndarray:
    return load_pose(Path(directory) / f"frame-{index:06d}.pose.txt")


# ---------------------------------------------------------------------------
# outdoor keypoints

_KEYS_HEADER = struct.Struct("<4sIII")


def save_keypoints(path: str | Path, pixels: np.ndarray,
                   descriptors: np.ndarray) -> None:
    """Binary keypoint file: header then per-point f32 x, y, 64 x f32."""
    pixels = np.asarray(pixels, dtype=np.float32)
    descriptors = np.asarray(descriptors, dtype=np.float32)
    if descriptors.shape != (pixels.shape[0], KEYS_DIM):
        raise InvalidInputError("descriptors must be (n, 64)")
    records = np.concatenate([pixels, descriptors], axis=1).astype("<f4")
    header = _KEYS_HEADER.pack(KEYS_MAGIC, KEYS_VERSION, pixels.shape[0],
                               KEYS_DIM)
    Path(path).write_bytes(header + records.tobytes())


def load_keypoints(path: str | Path) -> KeypointSet:
    """Read either the binary format or the text variant `x y v1 ... v64`."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing keypoint file: {path}")
    blob = path.read_bytes()
    if blob[:4] == KEYS_MAGIC:
        if len(blob) < _KEYS_HEADER.size:
            raise DataError(f"{path}: truncated keypoint header")
        _, version, count, dim = _KEYS_HEADER.unpack_from(blob)
        if version != KEYS_VERSION:
            raise DataError(f"{path}: unsupported keypoint version {version}")
        if dim != KEYS_DIM:
            raise DataError(f"{path}: descriptor length {dim} != {KEYS_DIM}")
        expected = _KEYS_HEADER.size + count * (2 + dim) * 4
        if len(blob) != expected:
            raise DataError(f"{path}: keypoint payload size mismatch")
        records = np.frombuffer(blob, dtype="<f4", offset=_KEYS_HEADER.size)
        records = records.reshape(count, 2 + dim).astype(np.float64)
    else:
        records = _load_table(path, "malformed text keypoints")
        if records.size == 0:
            records = np.zeros((0, 2 + KEYS_DIM))
        if records.shape[1] != 2 + KEYS_DIM:
            raise DataError(
                f"{path}: expected {2 + KEYS_DIM} columns, got {records.shape[1]}"
            )
    pixels = records[:, :2]
    try:
        descriptors = normalize_descriptors(records[:, 2:])
    except InvalidInputError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return KeypointSet(pixels=pixels, descriptors=descriptors, name=path.stem)


def _load_table(path: Path, what: str) -> np.ndarray:
    """np.loadtxt with empty files handled quietly and DataError on parse."""
    text = path.read_text()
    if not text.strip():
        return np.zeros((0, 0))
    try:
        return np.loadtxt(io.StringIO(text), dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: {what}") from exc


def load_points3d(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing 3D point file: {path}")
    points = _load_table(path, "malformed point list")
    if points.size == 0:
        return np.zeros((0, 3))
    if points.shape[1] != 3:
        raise DataError(f"{path}: expected 3 columns, got {points.shape[1]}")
    return points


# ---------------------------------------------------------------------------
# whole-scene helpers


def scene_split_dir(scene_dir: str | Path, split: str) -> Path:
    if split not in ("train", "test"):
        raise InvalidInputError(f"unknown split: {split}")
    return Path(scene_dir) / split


def load_split(scene_dir: str | Path, split: str):
    """Load every RGB-D frame and pose of a split, in frame order."""
    split_dir = scene_split_dir(scene_dir, split)
    indices = frame_indices(split_dir)
    if not indices:
        raise EmptyFrameError(f"no frames found under {split_dir}")
    frames = [load_rgbd_frame(split_dir, i) for i in indices]
    poses = [load_frame_pose(split_dir, i) for i in indices]
    return indices, frames, poses
