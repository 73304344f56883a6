"""Regression-tree training and scalar prediction.

A tree routes a sample through threshold tests on cheap split features and
stores, at each leaf, the mean world position and mean descriptor of the
training samples that reached it. Prediction can descend greedily or revisit
skipped siblings in order of how close the sample came to each threshold.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from ..config import ForestConfig
from ..errors import InvalidInputError
from ..features import (
    descriptor_distance,
    random_feature_response,
    random_feature_responses,
    sample_random_selectors,
)
from ..modes import ForestMode
from .samples import SampleSet, TrainingSample

OBJECTIVE_BALANCED = 0
OBJECTIVE_VARIANCE = 1


@dataclass(frozen=True)
class WeakLearnerParams:
    """One split test: a feature selector plus threshold tau.

    Indoor selectors are (delta, c1, c2) pairwise color probes; outdoor
    selectors pick a single descriptor dimension (dim >= 0).
    """

    tau: float
    delta: np.ndarray | None = None  # (2,) pixel*meters
    c1: int = 0
    c2: int = 0
    dim: int = -1

    def __post_init__(self) -> None:
        if not np.isfinite(self.tau):
            raise InvalidInputError("threshold must be finite")
        if self.dim < 0:
            if self.delta is None:
                raise InvalidInputError("selector needs either delta or dim")
            if not (0 <= self.c1 <= 2 and 0 <= self.c2 <= 2):
                raise InvalidInputError("channel indices must be in {0,1,2}")


@dataclass
class LeafNode:
    mean_position: np.ndarray  # (3,) world meters
    mean_descriptor: np.ndarray  # (d,)
    sample_count: int


@dataclass
class SplitNode:
    params: WeakLearnerParams
    left: "SplitNode | LeafNode"
    right: "SplitNode | LeafNode"
    depth: int
    objective_id: int


class NoSplit:
    """Sentinel: no candidate produced a valid partition."""


@dataclass
class RegressionTree:
    root: SplitNode | LeafNode
    mode: ForestMode
    config: ForestConfig

    def leaves(self) -> list[LeafNode]:
        out: list[LeafNode] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, LeafNode):
                out.append(node)
            else:
                stack.append(node.right)
                stack.append(node.left)
        return out

    def node_count(self) -> int:
        count = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            count += 1
            if isinstance(node, SplitNode):
                stack.append(node.right)
                stack.append(node.left)
        return count

    def depth_histogram(self) -> dict[int, int]:
        """Leaf count per depth."""
        hist: dict[int, int] = {}
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            if isinstance(node, LeafNode):
                hist[depth] = hist.get(depth, 0) + 1
            else:
                stack.append((node.right, depth + 1))
                stack.append((node.left, depth + 1))
        return dict(sorted(hist.items()))


@dataclass
class Prediction:
    world_point: np.ndarray  # (3,)
    descriptor_distance: float
    leaves_examined: int


# ---------------------------------------------------------------------------
# weak learner evaluation


def weak_learner_response(sample: TrainingSample, params: WeakLearnerParams) -> float:
    if params.dim >= 0:
        if params.dim >= sample.descriptor.shape[0]:
            raise InvalidInputError("descriptor dimension out of range")
        return float(sample.descriptor[params.dim])
    if sample.rgb is None or sample.depth is None:
        raise InvalidInputError("pairwise color feature needs an RGB-D frame")
    u, v = int(sample.pixel[0]), int(sample.pixel[1])
    return random_feature_response(
        sample.rgb, sample.depth, u, v, params.delta, params.c1, params.c2
    )


def evaluate_weak_learner(sample: TrainingSample,
                          params: WeakLearnerParams) -> tuple[bool, float]:
    """Returns (goes_left, response); response <= tau routes left."""
    response = weak_learner_response(sample, params)
    return response <= params.tau, response


# ---------------------------------------------------------------------------
# split search


def _candidate_responses(samples: SampleSet, idx: np.ndarray,
                         config: ForestConfig, rng: np.random.Generator):
    """Draw selectors and compute their responses on the subset. (k, n)."""
    k = config.candidates_per_node
    if samples.mode == ForestMode.INDOOR_RGBD:
        deltas, c1s, c2s = sample_random_selectors(rng, k)
        responses = random_feature_responses(
            samples.frames_rgb, samples.frame_idx[idx],
            samples.us[idx], samples.vs[idx], samples.depth_at[idx],
            deltas, c1s, c2s,
        )
        selectors = (deltas, c1s, c2s, None)
    else:
        d = samples.descriptors.shape[1]
        dims = rng.integers(0, d, size=k)
        responses = np.ascontiguousarray(
            samples.descriptors[idx][:, dims].T.astype(np.float64)
        )
        selectors = (None, None, None, dims)
    return selectors, responses


def _threshold_counts(sorted_responses: np.ndarray,
                      thresholds: np.ndarray) -> np.ndarray:
    """#{response <= tau} per (candidate, threshold), via one searchsorted.

    Rows are made disjoint by adding per-row offsets that exceed the global
    value span, so a single pass over the flattened array covers every
    candidate. The offset step is a power of two, which keeps the shifted
    values exact for the integer-valued color responses.
    """
    k, n = sorted_responses.shape
    span = float(sorted_responses.max() - sorted_responses.min()) if n else 0.0
    step = 2.0 ** np.ceil(np.log2(span + 1.0))
    base = (np.arange(k) * 2.0 * step)[:, None]
    positions = np.searchsorted(
        (sorted_responses + base).ravel(), (thresholds + base).ravel(),
        side="right",
    ).reshape(thresholds.shape)
    return positions - np.arange(k)[:, None] * n


def choose_split(samples: SampleSet, idx: np.ndarray, depth: int,
                 config: ForestConfig, rng: np.random.Generator,
                 chunk_candidates: int = 8):
    """Best (selector, threshold) pair over the random candidate grid.

    Returns (params, left_idx, right_idx, objective_id) or NoSplit. Scores
    use the balanced objective above balanced_depth_limit and the spatial
    variance objective below it; ties keep the first candidate in draw order.

    Each candidate's responses are sorted once; threshold counts then come
    from binary search and the variance sums from prefix sums over the
    sorted labels, so no (candidate x threshold x sample) mask is ever
    built.
    """
    n = idx.size
    if n < 2 * config.min_leaf_samples:
        raise InvalidInputError("too few samples to attempt a split")
    k = config.candidates_per_node
    t = config.thresholds_per_candidate
    min_leaf = config.min_leaf_samples

    (deltas, c1s, c2s, dims), responses = _candidate_responses(
        samples, idx, config, rng
    )
    lo = responses.min(axis=1)
    hi = responses.max(axis=1)
    thresholds = rng.uniform(lo[:, None], hi[:, None], size=(k, t))

    balanced = depth < config.balanced_depth_limit
    objective_id = OBJECTIVE_BALANCED if balanced else OBJECTIVE_VARIANCE

    # color responses are integer-valued, so sorting in float32 is exact and
    # halves the memory traffic; descriptor responses stay float64
    sort_key = responses.astype(np.float32) if dims is None else responses
    order = np.argsort(sort_key, axis=1)
    rows = np.arange(k)[:, None]
    sorted_responses = responses[rows, order]
    counts = _threshold_counts(sorted_responses, thresholds)
    valid = (counts >= min_leaf) & (n - counts >= min_leaf)

    if balanced:
        scores = np.abs(n - 2.0 * counts) / n
    else:
        # prefix sums of centered labels and squared norms in sorted order
        # turn each (candidate, threshold) variance sum into one lookup
        labels = samples.labels[idx]
        centered = labels - labels.mean(axis=0)
        sq = np.einsum("ij,ij->i", centered, centered)
        aug = np.concatenate([centered, sq[:, None]], axis=1)  # (n, 4)
        total = aug.sum(axis=0)
        gather_idx = np.clip(counts - 1, 0, n - 1)
        # chunking bounds the (kc, n, 4) prefix buffer; small nodes go in one pass
        if n * k * 4 * 8 <= 1 << 26:
            chunk_candidates = k
        scores = np.empty((k, t))
        for start in range(0, k, chunk_candidates):
            stop = min(start + chunk_candidates, k)
            kc_rows = np.arange(stop - start)[:, None]
            prefix = np.cumsum(aug[order[start:stop]], axis=1)  # (kc, n, 4)
            left = prefix[kc_rows, gather_idx[start:stop]]  # (kc, t, 4)
            left[counts[start:stop] == 0] = 0.0
            right = total[None, None, :] - left
            c_left = counts[start:stop].astype(np.float64)
            c_right = n - c_left
            with np.errstate(divide="ignore", invalid="ignore"):
                left_fit = left[:, :, 3] - (
                    np.einsum("ktj,ktj->kt", left[:, :, :3], left[:, :, :3])
                    / c_left
                )
                right_fit = right[:, :, 3] - (
                    np.einsum("ktj,ktj->kt", right[:, :, :3], right[:, :, :3])
                    / c_right
                )
            scores[start:stop] = (left_fit + right_fit) / n
    scores = np.where(valid, scores, np.inf)

    flat_scores = scores.ravel()
    while True:
        flat_best = int(np.argmin(flat_scores))
        if not np.isfinite(flat_scores[flat_best]):
            return NoSplit
        ci, ti = divmod(flat_best, t)
        tau = float(thresholds[ci, ti])
        left_mask = responses[ci] <= tau
        c_exact = int(np.count_nonzero(left_mask))
        if min_leaf <= c_exact <= n - min_leaf:
            break
        # the searchsorted count can disagree with the exact comparison only
        # when a threshold sits within an ulp of a non-integer response;
        # discard that cell and pick the next best
        flat_scores[flat_best] = np.inf
    left_idx = idx[left_mask]
    right_idx = idx[~left_mask]
    if dims is None:
        params = WeakLearnerParams(
            tau=tau, delta=deltas[ci].copy(), c1=int(c1s[ci]), c2=int(c2s[ci])
        )
    else:
        params = WeakLearnerParams(tau=tau, dim=int(dims[ci]))
    return params, left_idx, right_idx, objective_id


# ---------------------------------------------------------------------------
# training


def _make_leaf(samples: SampleSet, idx: np.ndarray) -> LeafNode:
    return LeafNode(
        mean_position=samples.labels[idx].mean(axis=0),
        mean_descriptor=samples.descriptors[idx].mean(axis=0, dtype=np.float64),
        sample_count=int(idx.size),
    )


def build_tree(samples: SampleSet, config: ForestConfig,
               rng: np.random.Generator,
               idx: np.ndarray | None = None) -> RegressionTree:
    """Train a tree by recursive split search over a seeded candidate grid."""
    if idx is None:
        idx = np.arange(len(samples), dtype=np.int64)
    if idx.size == 0:
        raise InvalidInputError("cannot train a tree on zero samples")
    config.validate()

    def build(node_idx: np.ndarray, depth: int):
        if depth >= config.max_depth or node_idx.size < 2 * config.min_leaf_samples:
            return _make_leaf(samples, node_idx)
        result = choose_split(samples, node_idx, depth, config, rng)
        if result is NoSplit:
            return _make_leaf(samples, node_idx)
        params, left_idx, right_idx, objective_id = result
        return SplitNode(
            params=params,
            left=build(left_idx, depth + 1),
            right=build(right_idx, depth + 1),
            depth=depth,
            objective_id=objective_id,
        )

    return RegressionTree(root=build(idx, 0), mode=samples.mode, config=config)


# ---------------------------------------------------------------------------
# scalar prediction


def predict_greedy(tree: RegressionTree, sample: TrainingSample) -> Prediction:
    """Single root-to-leaf descent."""
    return predict_backtracking(tree, sample, 1)


def predict_backtracking(tree: RegressionTree, sample: TrainingSample,
                         n_max: int) -> Prediction:
    """Best-first revisiting of skipped siblings, up to n_max leaves.

    Each skipped sibling enters a min-priority queue keyed by how close the
    sample's response came to that split's threshold; equal keys pop in
    insertion order. The best leaf by descriptor distance wins.
    """
    if n_max < 1:
        raise InvalidInputError("n_max must be >= 1")
    queue: list = []
    push_order = itertools.count()
    best_position = None
    best_distance = np.inf
    leaves_examined = 0
    node = tree.root
    while True:
        while isinstance(node, SplitNode):
            goes_left, response = evaluate_weak_learner(sample, node.params)
            child, sibling = (
                (node.left, node.right) if goes_left else (node.right, node.left)
            )
            key = abs(response - node.params.tau)
            heapq.heappush(queue, (key, next(push_order), sibling))
            node = child
        distance = descriptor_distance(sample.descriptor, node.mean_descriptor)
        leaves_examined += 1
        if distance < best_distance:
            best_distance = distance
            best_position = node.mean_position
        if leaves_examined >= n_max or not queue:
            break
        _, _, node = heapq.heappop(queue)
    return Prediction(
        world_point=np.array(best_position, dtype=np.float64),
        descriptor_distance=float(best_distance),
        leaves_examined=leaves_examined,
    )
