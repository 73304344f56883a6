"""Training-sample containers.

SampleSet keeps everything in flat arrays so split search can score tens of
thousands of samples with whole-array operations. TrainingSample is the
one-at-a-time view used by the scalar prediction routines and by tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..errors import InvalidInputError
from ..modes import ForestMode, descriptor_length


@dataclass
class TrainingSample:
    """A single pixel (or keypoint) with its descriptor and world label."""

    pixel: np.ndarray  # (2,) u, v
    descriptor: np.ndarray  # (d,)
    world_label: np.ndarray | None = None  # (3,), absent for pure queries
    rgb: np.ndarray | None = None  # (H, W, 3) uint8 frame, indoor only
    depth: np.ndarray | None = None  # (H, W) float32 meters, indoor only


@dataclass
class SampleSet:
    """Column-wise store of samples sharing one mode.

    Indoor samples reference their source frames through frame_idx into the
    frames_rgb / frames_depth stacks; outdoor samples carry descriptors only.
    """

    mode: ForestMode
    pixels: np.ndarray  # (n, 2) float64
    descriptors: np.ndarray  # (n, d)
    labels: np.ndarray  # (n, 3) float64 world points
    frame_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int32))
    depth_at: np.ndarray | None = None  # (n,) float64, indoor
    frames_rgb: np.ndarray | None = None  # (F, H, W, 3) uint8, indoor
    frames_depth: np.ndarray | None = None  # (F, H, W) float32, indoor

    def __post_init__(self) -> None:
        n = self.pixels.shape[0]
        d = descriptor_length(self.mode)
        if self.descriptors.shape != (n, d):
            raise InvalidInputError(
                f"descriptors must be ({n}, {d}), got {self.descriptors.shape}"
            )
        if self.labels.shape != (n, 3):
            raise InvalidInputError("labels must be (n, 3)")
        if not np.all(np.isfinite(self.labels)):
            raise InvalidInputError("world labels must be finite")
        if self.frame_idx.shape[0] != n:
            if self.frame_idx.size == 0:
                self.frame_idx = np.zeros(n, np.int32)
            else:
                raise InvalidInputError("frame_idx length mismatch")
        if self.mode == ForestMode.INDOOR_RGBD:
            if self.frames_rgb is None or self.depth_at is None:
                raise InvalidInputError("indoor samples need frames and depths")
            if np.any(self.depth_at <= 0):
                raise InvalidInputError("indoor samples require positive depth")

    def __len__(self) -> int:
        return self.pixels.shape[0]

    # cached: split search hits these once per node over the same arrays
    @cached_property
    def us(self) -> np.ndarray:
        return self.pixels[:, 0].astype(np.int64)

    @cached_property
    def vs(self) -> np.ndarray:
        return self.pixels[:, 1].astype(np.int64)

    def sample(self, i: int) -> TrainingSample:
        """Materialize sample i as a standalone TrainingSample."""
        rgb = depth = None
        if self.mode == ForestMode.INDOOR_RGBD:
            f = int(self.frame_idx[i])
            rgb = self.frames_rgb[f]
            if self.frames_depth is not None:
                depth = self.frames_depth[f]
        return TrainingSample(
            pixel=self.pixels[i].copy(),
            descriptor=np.asarray(self.descriptors[i], dtype=np.float64),
            world_label=self.labels[i].copy(),
            rgb=rgb,
            depth=depth,
        )

    @staticmethod
    def concatenate(parts: list["SampleSet"]) -> "SampleSet":
        """Merge sets that already share one frames stack (same references)."""
        if not parts:
            raise InvalidInputError("nothing to concatenate")
        first = parts[0]
        return SampleSet(
            mode=first.mode,
            pixels=np.concatenate([p.pixels for p in parts]),
            descriptors=np.concatenate([p.descriptors for p in parts]),
            labels=np.concatenate([p.labels for p in parts]),
            frame_idx=np.concatenate([p.frame_idx for p in parts]),
            depth_at=None if first.depth_at is None
            else np.concatenate([p.depth_at for p in parts]),
            frames_rgb=first.frames_rgb,
            frames_depth=first.frames_depth,
        )
