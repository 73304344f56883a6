"""Split-quality objectives.

Upper tree levels optimize for balanced child sizes, which keeps depth (and
hence backtracking cost) predictable; lower levels minimize the spatial
variance of the 3D labels so leaves model compact world regions.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError


def balanced_objective(left_count: int, right_count: int) -> float:
    """|L - R| / (L + R): 0 for an even split, 1 when one side is empty."""
    if left_count < 0 or right_count < 0:
        raise InvalidInputError("counts must be non-negative")
    total = left_count + right_count
    if total == 0:
        raise InvalidInputError("balanced_objective needs at least one sample")
    return abs(left_count - right_count) / total


def spatial_variance(points) -> float:
    """Mean squared Euclidean deviation of 3D points from their mean."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise InvalidInputError("spatial_variance of an empty set")
    pts = pts.reshape(-1, 3)
    deviations = pts - pts.mean(axis=0)
    return float(np.mean(np.sum(deviations * deviations, axis=1)))


def variance_objective(left_labels, right_labels) -> float:
    """Size-weighted sum of per-side spatial variances."""
    left = np.asarray(left_labels, dtype=np.float64).reshape(-1, 3)
    right = np.asarray(right_labels, dtype=np.float64).reshape(-1, 3)
    total = left.shape[0] + right.shape[0]
    if total == 0:
        raise InvalidInputError("variance_objective needs at least one sample")
    value = 0.0
    if left.shape[0]:
        value += left.shape[0] / total * spatial_variance(left)
    if right.shape[0]:
        value += right.shape[0] / total * spatial_variance(right)
    return value
