"""Split features and patch descriptors.

Indoor RGB-D frames use two kinds of per-pixel measurements:

* random pairwise color features for split decisions, with the probe offset
  scaled by inverse depth so its physical size stays roughly constant;
* Walsh-Hadamard patch descriptors (20 lowest-sequency coefficients per
  channel, 60 values total) for leaf matching.

Outdoor RGB frames carry externally computed 64-d keypoint descriptors; split
decisions there threshold a single descriptor dimension.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidDepthError, InvalidInputError

PATCH_SIZE = 32
COEFFS_PER_CHANNEL = 20
OFFSET_RANGE_PX_M = 130.0  # probe offsets drawn from [-range, +range] pixel*meters


# ---------------------------------------------------------------------------
# Walsh-Hadamard machinery


def hadamard_natural(n: int) -> np.ndarray:
    """Sylvester-ordered Hadamard matrix of size n (power of two), entries +-1."""
    if n < 1 or n & (n - 1):
        raise InvalidInputError("Hadamard size must be a power of two")
    h = np.ones((1, 1))
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h


def sequency_permutation(n: int) -> np.ndarray:
    """Row permutation turning natural Hadamard order into sequency order."""
    h = hadamard_natural(n)
    changes = np.count_nonzero(np.diff(h, axis=1), axis=1)
    return np.argsort(changes, kind="stable")


def walsh_matrix(n: int) -> np.ndarray:
    """Orthonormal sequency-ordered Walsh-Hadamard basis, rows = basis functions."""
    return hadamard_natural(n)[sequency_permutation(n)] / np.sqrt(n)


def _fwht_natural(x: np.ndarray) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along the last axis."""
    x = np.array(x, dtype=np.float64, copy=True)
    n = x.shape[-1]
    if n & (n - 1):
        raise InvalidInputError("transform length must be a power of two")
    h = 1
    while h < n:
        y = x.reshape(x.shape[:-1] + (n // (2 * h), 2, h))
        a = y[..., 0, :] + y[..., 1, :]
        b = y[..., 0, :] - y[..., 1, :]
        x = np.stack([a, b], axis=-2).reshape(x.shape)
        h *= 2
    return x


def fwht2(patch: np.ndarray) -> np.ndarray:
    """Orthonormal 2D Walsh-Hadamard transform in sequency order.

    Works on (..., n, n) stacks via butterflies, so cost is O(n^2 log n)
    per patch instead of the O(n^3) of a plain matrix product.
    """
    patch = np.asarray(patch, dtype=np.float64)
    n = patch.shape[-1]
    if patch.shape[-2] != n:
        raise InvalidInputError("patches must be square")
    perm = sequency_permutation(n)
    out = _fwht_natural(patch)
    out = _fwht_natural(np.swapaxes(out, -1, -2))
    out = np.swapaxes(out, -1, -2)[..., perm, :][..., :, perm]
    return out / n


def zigzag_indices(count: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    """First `count` (row, col) pairs of the familiar zig-zag diagonal scan."""
    rows, cols = [], []
    for s in range(2 * size - 1):
        diag = [(s - j, j) for j in range(s + 1) if s - j < size and j < size]
        if s % 2 == 0:
            diag.reverse()  # even diagonals run bottom-left to top-right
        for r, c in diag:
            rows.append(r)
            cols.append(c)
            if len(rows) == count:
                return np.array(rows), np.array(cols)
    raise InvalidInputError("count exceeds grid size")


_ZZ_ROWS, _ZZ_COLS = zigzag_indices(COEFFS_PER_CHANNEL, PATCH_SIZE)
_N_BASIS_ROWS = int(max(_ZZ_ROWS.max(), _ZZ_COLS.max())) + 1
# The 20 zig-zag coefficients only touch the lowest few sequencies, so the
# descriptor path multiplies by this thin slice of the basis instead of
# running the full transform.
_WHT_ROWS = walsh_matrix(PATCH_SIZE)[:_N_BASIS_ROWS]


def extract_patches(image: np.ndarray, us: np.ndarray, vs: np.ndarray,
                    size: int = PATCH_SIZE) -> np.ndarray:
    """Gather size x size patches centered at integer pixels, channels first.

    Border pixels replicate edge values. Returns (n, channels, size, size)
    float64 for an (H, W, channels) image.
    """
    us = np.asarray(us, dtype=np.int64).reshape(-1)
    vs = np.asarray(vs, dtype=np.int64).reshape(-1)
    h, w = image.shape[:2]
    offsets = np.arange(size) - size // 2
    cols = np.clip(us[:, None] + offsets[None, :], 0, w - 1)
    rows = np.clip(vs[:, None] + offsets[None, :], 0, h - 1)
    patches = image[rows[:, :, None], cols[:, None, :]]  # (n, size, size, ch)
    return np.moveaxis(patches, -1, 1).astype(np.float64)


def wht_descriptors(rgb: np.ndarray, us: np.ndarray, vs: np.ndarray,
                    chunk: int = 1024) -> np.ndarray:
    """WHT descriptors for many pixels of one RGB image. Returns (n, 60).

    Layout is channel-major: values [0:20] come from R, [20:40] from G,
    [40:60] from B, each in zig-zag sequency order starting at DC.
    """
    us = np.asarray(us).reshape(-1)
    vs = np.asarray(vs).reshape(-1)
    n = us.shape[0]
    out = np.empty((n, 3 * COEFFS_PER_CHANNEL), dtype=np.float64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        patches = extract_patches(rgb, us[start:stop], vs[start:stop])
        # thin transform: only the sequency rows the zig-zag scan can reach,
        # with the same orthonormal scaling as the full 2D transform
        coeffs = _WHT_ROWS @ patches @ _WHT_ROWS.T
        picked = coeffs[:, :, _ZZ_ROWS, _ZZ_COLS]  # (m, 3, 20)
        out[start:stop] = picked.reshape(stop - start, -1)
    return out


def wht_descriptor(rgb: np.ndarray, u: int, v: int) -> np.ndarray:
    """Descriptor for a single pixel; see wht_descriptors for the layout."""
    return wht_descriptors(rgb, np.array([u]), np.array([v]))[0]


# ---------------------------------------------------------------------------
# random pairwise color features


def random_feature_response(rgb: np.ndarray, depth: np.ndarray, u: int, v: int,
                            delta: np.ndarray, c1: int, c2: int) -> float:
    """Depth-normalized pairwise color difference at one pixel.

    The probe lands at p + delta / D(p) with delta in pixel*meters, rounded
    to the nearest pixel and clamped to the image.
    """
    d = float(depth[v, u])
    if d <= 0:
        raise InvalidDepthError(f"no depth at pixel ({u}, {v})")
    h, w = depth.shape
    qu = int(np.clip(np.rint(u + delta[0] / d), 0, w - 1))
    qv = int(np.clip(np.rint(v + delta[1] / d), 0, h - 1))
    return float(rgb[v, u, c1]) - float(rgb[qv, qu, c2])


def random_feature_responses(frames_rgb: np.ndarray, frame_idx: np.ndarray,
                             us: np.ndarray, vs: np.ndarray,
                             depth_at: np.ndarray, deltas: np.ndarray,
                             c1s: np.ndarray, c2s: np.ndarray) -> np.ndarray:
    """Responses of many candidate selectors on many samples at once.

    frames_rgb is an (F, H, W, 3) stack; frame_idx/us/vs/depth_at have shape
    (n,) and deltas (k, 2), c1s/c2s (k,). Returns (k, n) float64. depth_at
    must already be valid (> 0) everywhere.
    """
    h, w = frames_rgb.shape[1:3]
    inv_d = 1.0 / depth_at[None, :]
    qu = np.clip(np.rint(us[None, :] + deltas[:, 0:1] * inv_d), 0, w - 1).astype(np.int32)
    qv = np.clip(np.rint(vs[None, :] + deltas[:, 1:2] * inv_d), 0, h - 1).astype(np.int32)
    base = frames_rgb[frame_idx, vs, us].astype(np.float64)  # (n, 3)
    probe = frames_rgb[frame_idx[None, :], qv, qu, c2s[:, None]].astype(np.float64)
    return base.T[c1s] - probe


def random_feature_response_rows(frames_rgb: np.ndarray, frame_idx: np.ndarray,
                                 us: np.ndarray, vs: np.ndarray,
                                 depth_at: np.ndarray, deltas: np.ndarray,
                                 c1s: np.ndarray, c2s: np.ndarray) -> np.ndarray:
    """One selector per sample: all arguments have leading shape (n,).

    This is the prediction-time access pattern, where every query pixel sits
    at its own tree node with that node's own selector.
    """
    h, w = frames_rgb.shape[1:3]
    inv_d = 1.0 / depth_at
    qu = np.clip(np.rint(us + deltas[:, 0] * inv_d), 0, w - 1).astype(np.int64)
    qv = np.clip(np.rint(vs + deltas[:, 1] * inv_d), 0, h - 1).astype(np.int64)
    base = frames_rgb[frame_idx, vs, us, c1s].astype(np.float64)
    probe = frames_rgb[frame_idx, qv, qu, c2s].astype(np.float64)
    return base - probe


def sample_random_selectors(rng: np.random.Generator, count: int):
    """Draw training candidates: probe offsets and channel pairs."""
    deltas = rng.uniform(-OFFSET_RANGE_PX_M, OFFSET_RANGE_PX_M, size=(count, 2))
    c1s = rng.integers(0, 3, size=count)
    c2s = rng.integers(0, 3, size=count)
    return deltas, c1s, c2s


# ---------------------------------------------------------------------------
# descriptor utilities


def descriptor_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError("descriptor length mismatch")
    diff = (a - b)[None, :]
    # same reduction kernel as the batched leaf scorer, so one-at-a-time and
    # batched searches return bitwise-identical distances
    return float(np.sqrt(np.einsum("ij,ij->i", diff, diff)[0]))


def normalize_descriptors(descriptors: np.ndarray) -> np.ndarray:
    """Scale rows to unit L2 norm; zero rows are rejected."""
    d = np.asarray(descriptors, dtype=np.float64)
    norms = np.linalg.norm(d, axis=-1, keepdims=True)
    if np.any(norms < 1e-12):
        raise InvalidInputError("zero-norm descriptor cannot be normalized")
    return d / norms
