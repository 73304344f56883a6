"""The forest: an ensemble of independently trained regression trees."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import ForestConfig
from ..errors import InvalidInputError
from ..modes import ForestMode, descriptor_length
from .batch import FlatTree, flatten_tree, predict_batch
from .samples import SampleSet, TrainingSample
from .tree import Prediction, RegressionTree, build_tree, predict_backtracking


@dataclass
class Forest:
    trees: list[RegressionTree]
    mode: ForestMode
    config: ForestConfig
    _flat: list[FlatTree] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not self.trees:
            raise InvalidInputError("a forest needs at least one tree")
        if any(t.mode != self.mode for t in self.trees):
            raise InvalidInputError("all trees must share the forest mode")

    @property
    def tree_count(self) -> int:
        return len(self.trees)

    @property
    def descriptor_length(self) -> int:
        return descriptor_length(self.mode)

    def flat_trees(self) -> list[FlatTree]:
        if self._flat is None:
            self._flat = [flatten_tree(t) for t in self.trees]
        return self._flat


def train_forest(per_tree_samples: list[SampleSet],
                 config: ForestConfig) -> Forest:
    """Train tree t on per_tree_samples[t] with derived seed rng_seed + t."""
    config.validate()
    if len(per_tree_samples) != config.tree_count:
        raise InvalidInputError(
            f"expected {config.tree_count} sample sets, got {len(per_tree_samples)}"
        )
    if not all(len(s) for s in per_tree_samples):
        raise InvalidInputError("every tree needs a non-empty sample set")
    modes = {s.mode for s in per_tree_samples}
    if len(modes) != 1:
        raise InvalidInputError("sample sets disagree on mode")
    widths = {s.descriptors.shape[1] for s in per_tree_samples}
    if len(widths) != 1:
        raise InvalidInputError("sample sets disagree on descriptor length")
    trees = []
    for t, samples in enumerate(per_tree_samples):
        rng = np.random.default_rng(config.rng_seed + t)
        trees.append(build_tree(samples, config, rng))
    return Forest(trees=trees, mode=per_tree_samples[0].mode, config=config)


def forest_predict(forest: Forest, sample: TrainingSample,
                   n_max: int) -> list[Prediction]:
    """Per-tree backtracking predictions, in tree order."""
    return [predict_backtracking(tree, sample, n_max) for tree in forest.trees]


def forest_predict_batch(forest: Forest, descriptors: np.ndarray, n_max: int,
                         frames_rgb: np.ndarray | None = None,
                         frame_idx: np.ndarray | None = None,
                         us: np.ndarray | None = None,
                         vs: np.ndarray | None = None,
                         depth_at: np.ndarray | None = None):
    """All trees over all queries. Returns (T, n, 3), (T, n), (T, n) arrays."""
    positions, distances, leaves = [], [], []
    for flat in forest.flat_trees():
        pos, dist, seen = predict_batch(
            flat, descriptors, n_max, frames_rgb=frames_rgb,
            frame_idx=frame_idx, us=us, vs=vs, depth_at=depth_at,
        )
        positions.append(pos)
        distances.append(dist)
        leaves.append(seen)
    return np.stack(positions), np.stack(distances), np.stack(leaves)
