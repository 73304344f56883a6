"""Forest serialization.

Container layout (all little-endian):

    magic          4 bytes  "BTRF"
    version        u32      currently 1
    mode           u32      0 indoor RGB-D, 1 outdoor RGB
    tree_count     u32
    descriptor_len u32
    patch_size     u32      descriptor convention (0 when not applicable)
    coeffs_per_ch  u32      descriptor convention (0 when not applicable)
    config         8 x u32  max_depth, balanced_depth_limit, min_leaf_samples,
                            candidates_per_node, thresholds_per_candidate,
                            n_max, rng_seed, reserved(0)

then per tree: node_count u32 followed by the pre-order node stream. Node
records start with a type byte (0 split, 1 leaf):

    split: objective u8, dim i32, delta 2 x f64, c1 u8, c2 u8, tau f64
    leaf:  sample_count u32, mean_position 3 x f64, mean_descriptor d x f64

All floats are 64-bit IEEE-754, so save -> load -> save reproduces the file
byte for byte.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..config import ForestConfig
from ..errors import DataError
from ..features import COEFFS_PER_CHANNEL, PATCH_SIZE
from ..modes import ForestMode, descriptor_length
from .model import Forest
from .tree import LeafNode, RegressionTree, SplitNode, WeakLearnerParams

MAGIC = b"BTRF"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4s6I")
_CONFIG = struct.Struct("<8I")
_SPLIT = struct.Struct("<BBi2dBBd")
_LEAF_FIXED = struct.Struct("<BI")


def save_forest(forest: Forest, path: str | Path) -> None:
    d = forest.descriptor_length
    indoor = forest.mode == ForestMode.INDOOR_RGBD
    chunks = [
        _HEADER.pack(
            MAGIC, FORMAT_VERSION, int(forest.mode), forest.tree_count, d,
            PATCH_SIZE if indoor else 0,
            COEFFS_PER_CHANNEL if indoor else 0,
        ),
        _CONFIG.pack(
            forest.config.max_depth, forest.config.balanced_depth_limit,
            forest.config.min_leaf_samples, forest.config.candidates_per_node,
            forest.config.thresholds_per_candidate, forest.config.n_max,
            forest.config.rng_seed, 0,
        ),
    ]
    for tree in forest.trees:
        chunks.append(struct.pack("<I", tree.node_count()))
        _write_nodes(tree.root, chunks)
    Path(path).write_bytes(b"".join(chunks))


def _write_nodes(root, chunks: list[bytes]) -> None:
    stack = [root]
    while stack:
        node = stack.pop()
        if isinstance(node, LeafNode):
            chunks.append(_LEAF_FIXED.pack(1, node.sample_count))
            chunks.append(_f64_bytes(node.mean_position))
            chunks.append(_f64_bytes(node.mean_descriptor))
        else:
            p = node.params
            delta = (0.0, 0.0) if p.delta is None else (p.delta[0], p.delta[1])
            chunks.append(_SPLIT.pack(
                0, node.objective_id, p.dim, delta[0], delta[1],
                p.c1, p.c2, p.tau,
            ))
            stack.append(node.right)
            stack.append(node.left)


def _f64_bytes(values: np.ndarray) -> bytes:
    return values.astype(np.float64, copy=False).tobytes()


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise DataError(f"{self.path}: truncated model file")
        out = self.data[self.offset:self.offset + size]
        self.offset += size
        return out

    def unpack(self, s: struct.Struct):
        return s.unpack(self.take(s.size))


def load_forest(path: str | Path) -> Forest:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model file not found: {path}")
    reader = _Reader(path.read_bytes(), str(path))
    magic, version, mode_raw, tree_count, d, patch, coeffs = reader.unpack(_HEADER)
    if magic != MAGIC:
        raise DataError(f"{path}: not a forest model (bad magic)")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    try:
        mode = ForestMode(mode_raw)
    except ValueError:
        raise DataError(f"{path}: unknown mode {mode_raw}") from None
    if d != descriptor_length(mode):
        raise DataError(f"{path}: descriptor length {d} does not match mode")
    if mode == ForestMode.INDOOR_RGBD and (
        patch != PATCH_SIZE or coeffs != COEFFS_PER_CHANNEL
    ):
        raise DataError(
            f"{path}: descriptor convention {patch}/{coeffs} not supported"
        )
    cfg_values = reader.unpack(_CONFIG)
    config = ForestConfig(
        tree_count=tree_count,
        max_depth=cfg_values[0],
        balanced_depth_limit=cfg_values[1],
        min_leaf_samples=cfg_values[2],
        candidates_per_node=cfg_values[3],
        thresholds_per_candidate=cfg_values[4],
        n_max=cfg_values[5],
        rng_seed=cfg_values[6],
    )
    trees = []
    for _ in range(tree_count):
        (node_count,) = reader.unpack(struct.Struct("<I"))
        root, consumed = _read_nodes(reader, d)
        if consumed != node_count:
            raise DataError(f"{path}: node count mismatch in tree")
        trees.append(RegressionTree(root=root, mode=mode, config=config))
    if reader.offset != len(reader.data):
        raise DataError(f"{path}: trailing bytes after last tree")
    return Forest(trees=trees, mode=mode, config=config)


def _read_nodes(reader: _Reader, d: int, depth: int = 0):
    """Recursive pre-order decode; returns (node, nodes consumed)."""
    if reader.offset >= len(reader.data):
        raise DataError(f"{reader.path}: truncated model file")
    (node_type,) = struct.unpack_from("<B", reader.data, reader.offset)
    if node_type == 1:
        _, sample_count = reader.unpack(_LEAF_FIXED)
        position = np.frombuffer(reader.take(3 * 8), dtype="<f8").copy()
        descriptor = np.frombuffer(reader.take(d * 8), dtype="<f8").copy()
        return LeafNode(position, descriptor, sample_count), 1
    if node_type != 0:
        raise DataError(f"{reader.path}: corrupt node type {node_type}")
    _, objective, dim, dx, dy, c1, c2, tau = reader.unpack(_SPLIT)
    if dim >= 0:
        params = WeakLearnerParams(tau=tau, dim=dim)
    else:
        params = WeakLearnerParams(
            tau=tau, delta=np.array([dx, dy]), c1=c1, c2=c2
        )
    left, n_left = _read_nodes(reader, d, depth + 1)
    right, n_right = _read_nodes(reader, d, depth + 1)
    node = SplitNode(params=params, left=left, right=right, depth=depth,
                     objective_id=objective)
    return node, 1 + n_left + n_right
