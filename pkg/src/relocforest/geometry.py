"""Pinhole camera model, rigid transforms, and pose solvers.

Conventions used everywhere in this package:

* Camera looks down +z, image x grows right, image y grows down.
* A pose is a 4x4 float64 camera-to-world matrix: ``p_world = R @ p_cam + t``.
* Pixels are (u, v) with u horizontal. Integer pixel (u, v) samples the
  center of that pixel, so no half-pixel offsets appear anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateConfigurationError,
    InvalidDepthError,
    InvalidInputError,
    InvalidPoseError,
    NoSolutionError,
)


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics of one camera."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("image size must be positive")

    def matrix(self) -> np.ndarray:
        k = np.eye(3)
        k[0, 0], k[1, 1] = self.fx, self.fy
        k[0, 2], k[1, 2] = self.cx, self.cy
        return k


# ---------------------------------------------------------------------------
# projection


def backproject(u, v, depth, intrinsics: Intrinsics) -> np.ndarray:
    """Lift pixels with metric depth to camera-space 3D points.

    Accepts scalars or equally shaped arrays; returns (..., 3).
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise InvalidDepthError("depth must be positive")
    x = (u - intrinsics.cx) * depth / intrinsics.fx
    y = (v - intrinsics.cy) * depth / intrinsics.fy
    return np.stack([x, y, np.broadcast_to(depth, x.shape)], axis=-1)


def project(points_cam: np.ndarray, intrinsics: Intrinsics) -> np.ndarray:
    """Project camera-space points to pixels; raises if any lie at or behind z=0."""
    pts = np.asarray(points_cam, dtype=np.float64)
    z = pts[..., 2]
    if np.any(z <= 0):
        raise BehindCameraError("point behind camera")
    u = intrinsics.fx * pts[..., 0] / z + intrinsics.cx
    v = intrinsics.fy * pts[..., 1] / z + intrinsics.cy
    return np.stack([u, v], axis=-1)


def project_masked(points_cam: np.ndarray, intrinsics: Intrinsics):
    """Like project() but flags invalid points instead of raising.

    Returns (uv, ok) where rows of uv with ok == False are zeroed.
    """
    pts = np.asarray(points_cam, dtype=np.float64)
    z = pts[..., 2]
    ok = z > 1e-12
    zs = np.where(ok, z, 1.0)
    u = intrinsics.fx * pts[..., 0] / zs + intrinsics.cx
    v = intrinsics.fy * pts[..., 1] / zs + intrinsics.cy
    uv = np.stack([u, v], axis=-1)
    uv[~ok] = 0.0
    return uv, ok


def pixel_bearings(uv: np.ndarray, intrinsics: Intrinsics) -> np.ndarray:
    """Unit view rays through pixels, in camera coordinates. (n,2) -> (n,3)."""
    uv = np.asarray(uv, dtype=np.float64)
    x = (uv[..., 0] - intrinsics.cx) / intrinsics.fx
    y = (uv[..., 1] - intrinsics.cy) / intrinsics.fy
    rays = np.stack([x, y, np.ones_like(x)], axis=-1)
    return rays / np.linalg.norm(rays, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# rigid transforms


def pose_from_rt(rotation: np.ndarray, translation: np.ndarray) -> np.ndarray:
    pose = np.eye(4)
    pose[:3, :3] = rotation
    pose[:3, 3] = np.asarray(translation, dtype=np.float64).reshape(3)
    return pose


def rotation_of(pose: np.ndarray) -> np.ndarray:
    return np.asarray(pose, dtype=np.float64)[:3, :3]


def translation_of(pose: np.ndarray) -> np.ndarray:
    return np.asarray(pose, dtype=np.float64)[:3, 3]


def validate_pose(pose: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Check a 4x4 matrix is a rigid camera-to-world pose; returns it as float64."""
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape != (4, 4):
        raise InvalidPoseError(f"pose must be 4x4, got {pose.shape}")
    if not np.all(np.isfinite(pose)):
        raise InvalidPoseError("pose contains non-finite values")
    if np.max(np.abs(pose[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > tol:
        raise InvalidPoseError("last pose row must be [0 0 0 1]")
    r = pose[:3, :3]
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
        raise InvalidPoseError("rotation block is not orthonormal")
    if np.linalg.det(r) < 0:
        raise InvalidPoseError("rotation block is a reflection")
    return pose


def invert_pose(pose: np.ndarray) -> np.ndarray:
    r = pose[:3, :3]
    t = pose[:3, 3]
    inv = np.eye(4)
    inv[:3, :3] = r.T
    inv[:3, 3] = -r.T @ t
    return inv


def transform_points(pose: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a 4x4 transform to (..., 3) points."""
    pts = np.asarray(points, dtype=np.float64)
    return pts @ pose[:3, :3].T + pose[:3, 3]


def orthonormalize_rotation(r: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense (polar projection)."""
    u, _, vt = np.linalg.svd(r)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def rodrigues(axis_angle: np.ndarray) -> np.ndarray:
    """Axis-angle vector (3,) to rotation matrix."""
    w = np.asarray(axis_angle, dtype=np.float64).reshape(3)
    theta = np.linalg.norm(w)
    k = np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])
    if theta < 1e-12:
        # second-order Taylor keeps the result orthonormal to machine precision
        return np.eye(3) + k + 0.5 * (k @ k)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def pose_error(estimated: np.ndarray, reference: np.ndarray) -> tuple[float, float]:
    """Translation error in meters and rotation error in degrees.

    The angle is the magnitude of the relative rotation. Taking it from
    atan2 of the relative rotation's antisymmetric part instead of from
    arccos of its trace keeps full precision at both ends of the range,
    where the arccos form loses half the significant digits.
    """
    dt = float(np.linalg.norm(translation_of(estimated) - translation_of(reference)))
    rrel = rotation_of(reference).T @ rotation_of(estimated)
    cosang = (np.trace(rrel) - 1.0) / 2.0
    axial = np.array([
        rrel[2, 1] - rrel[1, 2],
        rrel[0, 2] - rrel[2, 0],
        rrel[1, 0] - rrel[0, 1],
    ])
    sinang = 0.5 * np.linalg.norm(axial)
    return dt, float(np.degrees(np.arctan2(sinang, cosang)))


def look_at(position: np.ndarray, target: np.ndarray,
            up: np.ndarray = (0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world pose for a camera at `position` looking at `target`.

    Image y points as far down the world `up` axis as the geometry allows.
    """
    position = np.asarray(position, dtype=np.float64).reshape(3)
    target = np.asarray(target, dtype=np.float64).reshape(3)
    up = np.asarray(up, dtype=np.float64).reshape(3)
    forward = target - position
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise InvalidInputError("look_at target coincides with position")
    z_c = forward / norm
    x_c = np.cross(z_c, up)
    if np.linalg.norm(x_c) < 1e-9:
        # view axis parallel to up: fall back to an arbitrary horizontal axis
        x_c = np.cross(z_c, np.array([1.0, 0.0, 0.0]))
        if np.linalg.norm(x_c) < 1e-9:
            x_c = np.cross(z_c, np.array([0.0, 1.0, 0.0]))
    x_c = x_c / np.linalg.norm(x_c)
    y_c = np.cross(z_c, x_c)
    return pose_from_rt(np.stack([x_c, y_c, z_c], axis=1), position)


# ---------------------------------------------------------------------------
# absolute-pose solvers


def kabsch(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Least-squares rigid transform taking src points onto dst points.

    Returns the 4x4 transform minimizing sum ||(R @ src_i + t) - dst_i||^2.
    Needs at least 3 non-collinear point pairs.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise InvalidInputError("kabsch expects matching (n,3) arrays")
    if src.shape[0] < 3:
        raise InvalidInputError("kabsch needs at least 3 point pairs")
    src_mean = src.mean(axis=0)
    dst_mean = dst.mean(axis=0)
    cov = (src - src_mean).T @ (dst - dst_mean)
    u, s, vt = np.linalg.svd(cov)
    # rank < 2 means the points fit on a line and rotation about it is free
    if s[1] <= max(1e-12, 1e-9 * s[0]):
        raise DegenerateConfigurationError("kabsch: point sets are collinear")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return pose_from_rt(rot, dst_mean - rot @ src_mean)


def _polish_root(coeffs: np.ndarray, x: float, iterations: int = 2) -> float:
    deriv = np.polyder(coeffs)
    for _ in range(iterations):
        f = np.polyval(coeffs, x)
        fp = np.polyval(deriv, x)
        if abs(fp) < 1e-18:
            break
        x -= f / fp
    return x


def p3p(world_points: np.ndarray, bearings: np.ndarray) -> list[np.ndarray]:
    """Absolute camera pose from 3 world points and their unit view rays.

    Returns up to four camera-to-world candidate poses. Raises
    DegenerateConfigurationError for collinear points or parallel rays.
    """
    worlds = np.asarray(world_points, dtype=np.float64).copy()
    f = np.asarray(bearings, dtype=np.float64).copy()
    if worlds.shape != (3, 3) or f.shape != (3, 3):
        raise InvalidInputError("p3p expects three world points and three bearings")
    f = f / np.linalg.norm(f, axis=1, keepdims=True)

    if np.linalg.norm(np.cross(worlds[1] - worlds[0], worlds[2] - worlds[0])) < 1e-12:
        raise DegenerateConfigurationError("p3p: world points are collinear")

    # intermediate camera frame built from the first two rays
    def camera_frame(f1, f2):
        tz = np.cross(f1, f2)
        n = np.linalg.norm(tz)
        if n < 1e-12:
            raise DegenerateConfigurationError("p3p: view rays are parallel")
        tz = tz / n
        ty = np.cross(tz, f1)
        return np.stack([f1, ty, tz], axis=0)

    t_frame = camera_frame(f[0], f[1])
    f3_t = t_frame @ f[2]
    if f3_t[2] > 0:
        # keep the third ray in the half space where theta stays in (0, pi)
        f = f[[1, 0, 2]]
        worlds = worlds[[1, 0, 2]]
        t_frame = camera_frame(f[0], f[1])
        f3_t = t_frame @ f[2]
    if abs(f3_t[2]) < 1e-12:
        raise DegenerateConfigurationError("p3p: third ray lies in the base plane")

    # intermediate world frame anchored at the first point
    nx = worlds[1] - worlds[0]
    d12 = np.linalg.norm(nx)
    nx = nx / d12
    nz = np.cross(nx, worlds[2] - worlds[0])
    nz = nz / np.linalg.norm(nz)
    ny = np.cross(nz, nx)
    n_frame = np.stack([nx, ny, nz], axis=0)
    p3_n = n_frame @ (worlds[2] - worlds[0])
    p1, p2 = p3_n[0], p3_n[1]

    phi1 = f3_t[0] / f3_t[2]
    phi2 = f3_t[1] / f3_t[2]
    cos_beta = float(f[0] @ f[1])
    b = 1.0 / (1.0 - cos_beta * cos_beta) - 1.0
    b = np.sqrt(max(b, 0.0))
    if cos_beta < 0:
        b = -b

    phi1_2, phi2_2 = phi1 * phi1, phi2 * phi2
    p1_2, p2_2 = p1 * p1, p2 * p2
    p1_3, p2_3 = p1_2 * p1, p2_2 * p2
    p1_4, p2_4 = p1_3 * p1, p2_3 * p2
    d12_2, b_2 = d12 * d12, b * b

    quartic = np.array([
        -phi2_2 * p2_4 - p2_4 * phi1_2 - p2_4,
        2.0 * p2_3 * d12 * b
        + 2.0 * phi2_2 * p2_3 * d12 * b
        - 2.0 * phi2 * p2_3 * phi1 * d12,
        -phi2_2 * p2_2 * p1_2
        - phi2_2 * p2_2 * d12_2 * b_2
        - phi2_2 * p2_2 * d12_2
        + phi2_2 * p2_4
        + p2_4 * phi1_2
        + 2.0 * p1 * p2_2 * d12
        + 2.0 * phi1 * phi2 * p1 * p2_2 * d12 * b
        - p2_2 * p1_2 * phi1_2
        + 2.0 * p1 * p2_2 * phi2_2 * d12
        - p2_2 * d12_2 * b_2
        - 2.0 * p1_2 * p2_2,
        2.0 * p1_2 * p2 * d12 * b
        + 2.0 * phi2 * p2_3 * phi1 * d12
        - 2.0 * phi2_2 * p2_3 * d12 * b
        - 2.0 * p1 * p2 * d12_2 * b,
        -2.0 * phi2 * p2_2 * phi1 * p1 * d12 * b
        + phi2_2 * p2_2 * d12_2
        + 2.0 * p1_3 * d12
        - p1_2 * d12_2
        + phi2_2 * p2_2 * p1_2
        - p1_4
        - 2.0 * phi2_2 * p2_2 * p1 * d12
        + p2_2 * phi1_2 * p1_2
        + phi2_2 * p2_2 * d12_2 * b_2,
    ])

    roots = np.roots(quartic)
    poses: list[np.ndarray] = []
    for root in roots:
        if abs(root.imag) > 1e-8:
            continue
        cos_theta = _polish_root(quartic, float(root.real))
        if not -1.0 <= cos_theta <= 1.0:
            continue
        sin_theta = np.sqrt(max(1.0 - cos_theta * cos_theta, 0.0))
        denom = -phi1 * cos_theta * p2 / phi2 + p1 - d12
        if abs(denom) < 1e-15:
            continue
        cot_alpha = (-phi1 * p1 / phi2 - cos_theta * p2 + d12 * b) / denom
        sin_alpha = np.sqrt(1.0 / (cot_alpha * cot_alpha + 1.0))
        cos_alpha = np.sqrt(max(1.0 - sin_alpha * sin_alpha, 0.0))
        if cot_alpha < 0:
            cos_alpha = -cos_alpha

        scale = d12 * (sin_alpha * b + cos_alpha)
        center_n = np.array([
            cos_alpha * scale,
            cos_theta * sin_alpha * scale,
            sin_theta * sin_alpha * scale,
        ])
        rot_int = np.array([
            [-cos_alpha, -sin_alpha * cos_theta, -sin_alpha * sin_theta],
            [sin_alpha, -cos_alpha * cos_theta, -cos_alpha * sin_theta],
            [0.0, -sin_theta, cos_theta],
        ])
        rot = orthonormalize_rotation(n_frame.T @ rot_int.T @ t_frame)
        center = worlds[0] + n_frame.T @ center_n
        poses.append(pose_from_rt(rot, center))
    return poses


def solve_p3p_pixels(world_points: np.ndarray, pixels: np.ndarray,
                     intrinsics: Intrinsics) -> np.ndarray:
    """Disambiguated absolute pose from 4 world-point/pixel correspondences.

    The first three pairs feed the minimal solver; the fourth selects the
    candidate with the smallest reprojection error.
    """
    worlds = np.asarray(world_points, dtype=np.float64)
    pixels = np.asarray(pixels, dtype=np.float64)
    if worlds.shape != (4, 3) or pixels.shape != (4, 2):
        raise InvalidInputError("expected 4 world points and 4 pixels")
    candidates = p3p(worlds[:3], pixel_bearings(pixels[:3], intrinsics))
    best = None
    best_err = np.inf
    for pose in candidates:
        p_cam = transform_points(invert_pose(pose), worlds[3])
        if p_cam[2] <= 1e-9:
            continue
        uv = project(p_cam, intrinsics)
        err = float(np.linalg.norm(uv - pixels[3]))
        if err < best_err:
            best_err = err
            best = pose
    if best is None:
        raise NoSolutionError("no pose kept the disambiguation point in view")
    return best


def reprojection_jacobian(points_cam: np.ndarray,
                          intrinsics: Intrinsics) -> np.ndarray:
    """d(pixel residual)/d(twist) for points already in camera coordinates.

    The twist is (rotation increment, translation increment) applied on the
    left of the world-to-camera transform. Returns (n, 2, 6).
    """
    pts = np.asarray(points_cam, dtype=np.float64)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    inv_z = 1.0 / z
    fx, fy = intrinsics.fx, intrinsics.fy
    j_proj = np.zeros((pts.shape[0], 2, 3))
    j_proj[:, 0, 0] = fx * inv_z
    j_proj[:, 0, 2] = -fx * x * inv_z * inv_z
    j_proj[:, 1, 1] = fy * inv_z
    j_proj[:, 1, 2] = -fy * y * inv_z * inv_z
    # rotating the frame by exp(w) moves the point by -[p]x w
    j_rot = np.zeros((pts.shape[0], 3, 3))
    j_rot[:, 0, 1] = z
    j_rot[:, 0, 2] = -y
    j_rot[:, 1, 0] = -z
    j_rot[:, 1, 2] = x
    j_rot[:, 2, 0] = y
    j_rot[:, 2, 1] = -x
    return np.concatenate([j_proj @ j_rot, j_proj], axis=2)


def refine_pose_2d3d(pose: np.ndarray, world_points: np.ndarray,
                     pixels: np.ndarray, intrinsics: Intrinsics,
                     max_iterations: int = 20,
                     update_tolerance: float = 1e-10):
    """Gauss-Newton polish of a camera-to-world pose against pixel observations.

    Minimizes total squared reprojection error; each step solves the 6x6
    normal equations for a twist applied on the left of the world-to-camera
    transform, halving the step while it would increase the error. Returns
    (refined pose, degenerate flag); the flag is set, and the input pose
    returned unchanged, when the normal equations are singular at the start.
    """
    worlds = np.asarray(world_points, dtype=np.float64)
    pixels = np.asarray(pixels, dtype=np.float64)
    if worlds.ndim != 2 or worlds.shape[0] != pixels.shape[0]:
        raise InvalidInputError("mismatched correspondence arrays")
    if worlds.shape[0] < 3:
        raise InvalidInputError("refinement needs at least 3 correspondences")

    initial = validate_pose(pose)
    w2c = invert_pose(initial)

    def residuals(m):
        cam = transform_points(m, worlds)
        ok = cam[:, 2] > 1e-9
        if np.count_nonzero(ok) < 3:
            return None, None, None
        uv, _ = project_masked(cam, intrinsics)
        r = (uv - pixels)[ok]
        return r.reshape(-1), cam[ok], ok

    res, cam, ok = residuals(w2c)
    if res is None:
        raise DegenerateConfigurationError("too few points in front of the camera")
    err = float(res @ res)

    for iteration in range(max_iterations):
        jac = reprojection_jacobian(cam, intrinsics).reshape(-1, 6)
        jtj = jac.T @ jac
        jtr = jac.T @ res
        try:
            delta = np.linalg.solve(jtj, -jtr)
        except np.linalg.LinAlgError:
            if iteration == 0:
                return initial, True
            break

        # back off until the step actually reduces the error
        step = delta
        improved = False
        for _ in range(12):
            rot = rodrigues(step[:3])
            trial = np.eye(4)
            trial[:3, :3] = rot @ w2c[:3, :3]
            trial[:3, 3] = rot @ w2c[:3, 3] + step[3:]
            t_res, t_cam, t_ok = residuals(trial)
            if t_res is not None:
                t_err = float(t_res @ t_res)
                if t_err <= err:
                    w2c, res, cam, ok, err = trial, t_res, t_cam, t_ok, t_err
                    improved = True
                    break
            step = step / 2.0
        if not improved:
            break
        if np.linalg.norm(step) < update_tolerance:
            break

    w2c[:3, :3] = orthonormalize_rotation(w2c[:3, :3])
    return invert_pose(w2c), False
