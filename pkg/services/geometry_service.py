"""Camera model, rigid-pose algebra and 3D→2D projection.

Points carry their coordinates in the last axis and may be batched:
(3,) or (N, 3) for model/camera points in millimetres, (2,) or (N, 2) for
pixels. Normalised image coordinates are x = X/Z, y = Y/Z before
distortion.
"""
import logging

import cv2
import numpy as np

from config import Config
from models import CameraIntrinsics, RigidPose
from models.errors import NoConvergence, NonPositiveDepth
from models.pose import hat

logger = logging.getLogger(__name__)

UNDISTORT_TOLERANCE_PX = 1e-6


# ── Pose algebra ───────────────────────────────────────────────────────

def apply_pose(pose: RigidPose, p: np.ndarray) -> np.ndarray:
    """R·p + t."""
    return pose.apply(p)


def compose(a: RigidPose, b: RigidPose) -> RigidPose:
    """Pose applying `b` first, then `a`."""
    return a.compose(b)


def inverse(pose: RigidPose) -> RigidPose:
    return pose.inverse()


# ── Distortion ─────────────────────────────────────────────────────────

def distort(intr: CameraIntrinsics, xy: np.ndarray) -> np.ndarray:
    """Brown–Conrady forward model on normalised coordinates."""
    xy = np.asarray(xy, dtype=float)
    x, y = xy[..., 0], xy[..., 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (intr.k1 + r2 * (intr.k2 + r2 * intr.k3))
    xd = x * radial + 2.0 * intr.p1 * x * y + intr.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + intr.p1 * (r2 + 2.0 * y * y) + 2.0 * intr.p2 * x * y
    return np.stack([xd, yd], axis=-1)


def distortion_jacobian(intr: CameraIntrinsics, xy: np.ndarray) -> np.ndarray:
    """d(distort)/d(xy), shape (..., 2, 2)."""
    xy = np.asarray(xy, dtype=float)
    x, y = xy[..., 0], xy[..., 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (intr.k1 + r2 * (intr.k2 + r2 * intr.k3))
    dradial_dr2 = intr.k1 + 2.0 * intr.k2 * r2 + 3.0 * intr.k3 * r2 * r2
    dradial_dx = 2.0 * x * dradial_dr2
    dradial_dy = 2.0 * y * dradial_dr2

    jac = np.empty(xy.shape[:-1] + (2, 2))
    jac[..., 0, 0] = radial + x * dradial_dx + 2.0 * intr.p1 * y + 6.0 * intr.p2 * x
    jac[..., 0, 1] = x * dradial_dy + 2.0 * intr.p1 * x + 2.0 * intr.p2 * y
    jac[..., 1, 0] = y * dradial_dx + 2.0 * intr.p1 * x + 2.0 * intr.p2 * y
    jac[..., 1, 1] = radial + y * dradial_dy + 6.0 * intr.p1 * y + 2.0 * intr.p2 * x
    return jac


def normalized_to_pixels(intr: CameraIntrinsics, xy: np.ndarray) -> np.ndarray:
    xy = np.asarray(xy, dtype=float)
    return np.stack([intr.fx * xy[..., 0] + intr.cx, intr.fy * xy[..., 1] + intr.cy], axis=-1)


def pixels_to_normalized(intr: CameraIntrinsics, uv: np.ndarray) -> np.ndarray:
    uv = np.asarray(uv, dtype=float)
    return np.stack([(uv[..., 0] - intr.cx) / intr.fx, (uv[..., 1] - intr.cy) / intr.fy], axis=-1)


def distort_pixels(intr: CameraIntrinsics, uv: np.ndarray) -> np.ndarray:
    """Map ideal (undistorted) pixels to where the lens puts them."""
    return normalized_to_pixels(intr, distort(intr, pixels_to_normalized(intr, uv)))


def opencv_distortion(intr: CameraIntrinsics) -> np.ndarray:
    """Distortion coefficients in OpenCV's (k1, k2, p1, p2, k3) order."""
    return np.array([intr.k1, intr.k2, intr.p1, intr.p2, intr.k3], dtype=np.float64)


def undistort(intr: CameraIntrinsics, u: np.ndarray, max_iterations: int = None) -> np.ndarray:
    """Invert the distortion map with OpenCV's iterative undistortion.

    Raises NoConvergence when any point's residual stays above 1e-6 px after
    `max_iterations` (the forward map is not invertible there).
    """
    if max_iterations is None:
        max_iterations = Config.UNDISTORT_MAX_ITERATIONS
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("undistort expects finite pixel coordinates")
    if not intr.has_distortion:
        return u.copy()

    single = u.ndim == 1
    pixels = np.ascontiguousarray(np.atleast_2d(u), dtype=np.float64)
    criteria = (cv2.TERM_CRITERIA_COUNT | cv2.TERM_CRITERIA_EPS, max_iterations, UNDISTORT_TOLERANCE_PX * 1e-3)
    estimate = cv2.undistortPointsIter(
        pixels.reshape(-1, 1, 2), intr.matrix, opencv_distortion(intr), np.eye(3), None, criteria,
    ).reshape(-1, 2)

    target = pixels_to_normalized(intr, pixels)
    focal = np.array([intr.fx, intr.fy])
    with np.errstate(invalid="ignore", over="ignore"):
        residual_px = np.linalg.norm((distort(intr, estimate) - target) * focal, axis=-1)
    if not np.all(residual_px < UNDISTORT_TOLERANCE_PX):
        finite = residual_px[np.isfinite(residual_px)]
        worst = float(finite.max()) if len(finite) else float("inf")
        raise NoConvergence(
            f"undistortion did not converge within {max_iterations} iterations "
            f"(residual {worst:.3g} px)"
        )
    result = normalized_to_pixels(intr, estimate)
    return result[0] if single else result


# ── Projection ─────────────────────────────────────────────────────────

def project_camera_points(intr: CameraIntrinsics, points_cam: np.ndarray) -> np.ndarray:
    """Project camera-frame points; depth <= 0 yields NaN rather than an error."""
    points_cam = np.asarray(points_cam, dtype=float)
    z = points_cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        xy = points_cam[..., :2] / z[..., None]
    xy = np.where((z > 0)[..., None], xy, np.nan)
    if intr.has_distortion:
        xy = distort(intr, xy)
    return normalized_to_pixels(intr, xy)


def project(intr: CameraIntrinsics, pose: RigidPose, p: np.ndarray) -> np.ndarray:
    """Perspective division, Brown–Conrady distortion, then pixel mapping.

    The result may fall outside the image; callers decide on clipping.
    """
    points_cam = pose.apply(p)
    z = np.atleast_1d(points_cam[..., 2])
    if np.any(z <= 0):
        raise NonPositiveDepth(f"{int(np.sum(z <= 0))} point(s) at or behind the camera")
    return project_camera_points(intr, points_cam)


def project_pinhole(intr: CameraIntrinsics, pose: RigidPose, p: np.ndarray) -> np.ndarray:
    """Projection without lens distortion (undistorted image frame)."""
    points_cam = pose.apply(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        xy = points_cam[..., :2] / points_cam[..., 2:3]
    return normalized_to_pixels(intr, xy)


def projection_jacobian(
    intr: CameraIntrinsics,
    pose: RigidPose,
    points: np.ndarray,
    distortion: bool = True,
) -> np.ndarray:
    """d(pixel)/d(xi) for the increment used by RigidPose.retract, shape (N, 2, 6)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    rotated = points @ pose.R.T
    cam = rotated + pose.t
    z = cam[:, 2]
    inv_z = 1.0 / z

    d_xy_d_cam = np.zeros((len(points), 2, 3))
    d_xy_d_cam[:, 0, 0] = inv_z
    d_xy_d_cam[:, 0, 2] = -cam[:, 0] * inv_z * inv_z
    d_xy_d_cam[:, 1, 1] = inv_z
    d_xy_d_cam[:, 1, 2] = -cam[:, 1] * inv_z * inv_z

    d_cam_d_xi = np.zeros((len(points), 3, 6))
    d_cam_d_xi[:, :, :3] = -hat(rotated)
    d_cam_d_xi[:, :, 3:] = np.eye(3)

    jac = d_xy_d_cam @ d_cam_d_xi
    if distortion and intr.has_distortion:
        xy = cam[:, :2] * inv_z[:, None]
        jac = distortion_jacobian(intr, xy) @ jac
    jac[:, 0, :] *= intr.fx
    jac[:, 1, :] *= intr.fy
    return jac


def in_image(intr: CameraIntrinsics, uv: np.ndarray) -> np.ndarray:
    """Whether each pixel coordinate rounds to a pixel inside the image."""
    uv = np.asarray(uv, dtype=float)
    with np.errstate(invalid="ignore"):
        cols = np.floor(uv[..., 0] + 0.5)
        rows = np.floor(uv[..., 1] + 0.5)
        return (
            np.isfinite(uv[..., 0]) & np.isfinite(uv[..., 1])
            & (cols >= 0) & (cols < intr.width)
            & (rows >= 0) & (rows < intr.height)
        )
