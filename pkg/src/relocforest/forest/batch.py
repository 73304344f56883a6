"""Array-based prediction over many query pixels at once.

The scalar routines in tree.py walk one sample at a time, which is the
clearest statement of the algorithm but far too slow for 25k queries per
frame. This module flattens a tree into arrays and advances every query in
lockstep: descend all lanes to their leaves, score the leaves, then pop each
lane's next-best sibling from a per-lane array priority queue and repeat.
Semantics (routing, queue keys, tie order, best-so-far updates) match the
scalar path exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from ..features import random_feature_response_rows
from ..modes import ForestMode
from .tree import LeafNode, RegressionTree, SplitNode


@dataclass
class FlatTree:
    """Pre-order array form of one RegressionTree."""

    mode: ForestMode
    left: np.ndarray  # (m,) int32 child ids, -1 at leaves
    right: np.ndarray  # (m,) int32
    tau: np.ndarray  # (m,) float64
    delta: np.ndarray  # (m, 2) float64 probe offsets, zeros at leaves
    c1: np.ndarray  # (m,) int8
    c2: np.ndarray  # (m,) int8
    dim: np.ndarray  # (m,) int32 descriptor dimension, -1 where unused
    depth: np.ndarray  # (m,) int16
    objective: np.ndarray  # (m,) int8 objective id, -1 at leaves
    leaf_id: np.ndarray  # (m,) int32 row into leaf arrays, -1 at splits
    leaf_positions: np.ndarray  # (n_leaves, 3) float64
    leaf_descriptors: np.ndarray  # (n_leaves, d) float64
    leaf_sample_counts: np.ndarray  # (n_leaves,) int64

    @property
    def node_count(self) -> int:
        return self.left.shape[0]

    @property
    def leaf_count(self) -> int:
        return self.leaf_positions.shape[0]

    @property
    def max_depth_used(self) -> int:
        return int(self.depth.max(initial=0))


def flatten_tree(tree: RegressionTree) -> FlatTree:
    """Serialize the node graph into pre-order arrays."""
    nodes: list = []
    stack = [(tree.root, 0)]
    # right child pushed first so pops visit root, left subtree, right subtree
    while stack:
        node, depth = stack.pop()
        nodes.append((node, depth))
        if isinstance(node, SplitNode):
            stack.append((node.right, depth + 1))
            stack.append((node.left, depth + 1))
    order = {id(node): i for i, (node, _) in enumerate(nodes)}

    m = len(nodes)
    d = _descriptor_length(tree.root)
    flat = FlatTree(
        mode=tree.mode,
        left=np.full(m, -1, np.int32),
        right=np.full(m, -1, np.int32),
        tau=np.zeros(m, np.float64),
        delta=np.zeros((m, 2), np.float64),
        c1=np.zeros(m, np.int8),
        c2=np.zeros(m, np.int8),
        dim=np.full(m, -1, np.int32),
        depth=np.zeros(m, np.int16),
        objective=np.full(m, -1, np.int8),
        leaf_id=np.full(m, -1, np.int32),
        leaf_positions=np.zeros((0, 3)),
        leaf_descriptors=np.zeros((0, d)),
        leaf_sample_counts=np.zeros(0, np.int64),
    )
    leaf_positions, leaf_descriptors, leaf_counts = [], [], []
    for i, (node, depth) in enumerate(nodes):
        flat.depth[i] = depth
        if isinstance(node, LeafNode):
            flat.leaf_id[i] = len(leaf_positions)
            leaf_positions.append(node.mean_position)
            leaf_descriptors.append(node.mean_descriptor)
            leaf_counts.append(node.sample_count)
        else:
            flat.left[i] = order[id(node.left)]
            flat.right[i] = order[id(node.right)]
            flat.tau[i] = node.params.tau
            flat.objective[i] = node.objective_id
            if node.params.dim >= 0:
                flat.dim[i] = node.params.dim
            else:
                flat.delta[i] = node.params.delta
                flat.c1[i] = node.params.c1
                flat.c2[i] = node.params.c2
    flat.leaf_positions = np.asarray(leaf_positions, dtype=np.float64)
    flat.leaf_descriptors = np.asarray(leaf_descriptors, dtype=np.float64)
    flat.leaf_sample_counts = np.asarray(leaf_counts, dtype=np.int64)
    return flat


def _descriptor_length(root) -> int:
    node = root
    while isinstance(node, SplitNode):
        node = node.left
    return node.mean_descriptor.shape[0]


def predict_batch(flat: FlatTree, descriptors: np.ndarray, n_max: int,
                  frames_rgb: np.ndarray | None = None,
                  frame_idx: np.ndarray | None = None,
                  us: np.ndarray | None = None, vs: np.ndarray | None = None,
                  depth_at: np.ndarray | None = None):
    """Backtracking prediction for n queries against one flattened tree.

    Returns (world_points (n,3), descriptor_distances (n,), leaves_examined
    (n,)). Indoor trees additionally need the pixel context arrays.
    """
    if n_max < 1:
        raise InvalidInputError("n_max must be >= 1")
    descriptors = np.asarray(descriptors, dtype=np.float64)
    n = descriptors.shape[0]
    indoor = flat.mode == ForestMode.INDOOR_RGBD
    if indoor and (frames_rgb is None or frame_idx is None or us is None
                   or vs is None or depth_at is None):
        raise InvalidInputError("indoor prediction needs pixel context arrays")

    capacity = n_max * (flat.max_depth_used + 1) + 2
    q_key = np.full((n, capacity), np.inf)
    q_node = np.zeros((n, capacity), np.int32)
    q_order = np.zeros((n, capacity), np.int64)
    q_len = np.zeros(n, np.int64)
    pushes = np.zeros(n, np.int64)

    best_d2 = np.full(n, np.inf)
    best_pos = np.zeros((n, 3))
    leaves_examined = np.zeros(n, np.int64)
    current = np.zeros(n, np.int32)  # every lane starts at the root
    alive = np.arange(n)

    while alive.size:
        # stage 1: walk every alive lane down to a leaf
        walking = alive[flat.left[current[alive]] >= 0]
        while walking.size:
            nodes = current[walking]
            if indoor:
                responses = random_feature_response_rows(
                    frames_rgb, frame_idx[walking], us[walking], vs[walking],
                    depth_at[walking], flat.delta[nodes], flat.c1[nodes],
                    flat.c2[nodes],
                )
            else:
                responses = descriptors[walking, flat.dim[nodes]]
            tau = flat.tau[nodes]
            goes_left = responses <= tau
            nxt = np.where(goes_left, flat.left[nodes], flat.right[nodes])
            sibling = np.where(goes_left, flat.right[nodes], flat.left[nodes])
            slot = q_len[walking]
            q_key[walking, slot] = np.abs(responses - tau)
            q_node[walking, slot] = sibling
            q_order[walking, slot] = pushes[walking]
            pushes[walking] += 1
            q_len[walking] = slot + 1
            current[walking] = nxt
            walking = walking[flat.left[nxt] >= 0]

        # stage 2: score the leaves
        leaf_rows = flat.leaf_id[current[alive]]
        diff = descriptors[alive] - flat.leaf_descriptors[leaf_rows]
        d2 = np.einsum("ij,ij->i", diff, diff)
        better = d2 < best_d2[alive]
        improved = alive[better]
        best_d2[improved] = d2[better]
        best_pos[improved] = flat.leaf_positions[leaf_rows[better]]
        leaves_examined[alive] += 1

        # stage 3: retire finished lanes, pop the next sibling for the rest
        keep = (leaves_examined[alive] < n_max) & (q_len[alive] > 0)
        alive = alive[keep]
        if alive.size == 0:
            break
        keys = q_key[alive]
        key_min = keys.min(axis=1)
        tie = keys == key_min[:, None]
        orders = np.where(tie, q_order[alive], np.iinfo(np.int64).max)
        j = orders.argmin(axis=1)
        current[alive] = q_node[alive, j]
        last = q_len[alive] - 1
        q_key[alive, j] = q_key[alive, last]
        q_node[alive, j] = q_node[alive, last]
        q_order[alive, j] = q_order[alive, last]
        q_key[alive, last] = np.inf
        q_len[alive] = last

    return best_pos, np.sqrt(best_d2), leaves_examined
