"""Pose from 3D-2D correspondences.

OpenCV provides the minimal solver, the linear starting poses, RANSAC and
the Levenberg–Marquardt steps; the adapters below translate between its
(rvec, tvec) pairs and RigidPose. Image points handed to these solvers
live in the undistorted image frame; `undistort_target_pixels` converts
landmark pixels read from an image.
"""
import logging
import math
from typing import Optional, Sequence

import cv2
import numpy as np
from scipy.spatial import cKDTree

from config import Config
from models import CameraIntrinsics, Correspondence, LabelledMesh, LandmarkMap2D, LandmarkSet3D, RigidPose
from models.errors import DegenerateConfiguration, NoConvergence, NoModelFound
from models.registration import correspondence_arrays
from .geometry_service import opencv_distortion, pixels_to_normalized, project, project_pinhole, undistort

logger = logging.getLogger(__name__)

REFINE_ITERATIONS = 100
REFINE_TOLERANCE = 1e-10
START_METHODS = (cv2.SOLVEPNP_SQPNP, cv2.SOLVEPNP_EPNP)
RECOMPUTE_ROUNDS = 10
POOL_LIMIT = 500


# ── OpenCV adapters ────────────────────────────────────────────────────

def to_rvec(pose: RigidPose) -> tuple[np.ndarray, np.ndarray]:
    rvec, _ = cv2.Rodrigues(np.ascontiguousarray(pose.R, dtype=np.float64))
    return rvec, np.array(pose.t, dtype=np.float64).reshape(3, 1)


def from_rvec(rvec, tvec) -> RigidPose:
    R, _ = cv2.Rodrigues(np.asarray(rvec, dtype=np.float64).reshape(3, 1))
    return RigidPose(R, np.asarray(tvec, dtype=np.float64).reshape(3))


def _object_points(points: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 1, 3)


def _image_points(pixels: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(pixels, dtype=np.float64).reshape(-1, 1, 2)


# ── Helpers ────────────────────────────────────────────────────────────

def bearings(intr: CameraIntrinsics, pixels: np.ndarray) -> np.ndarray:
    """Unit viewing rays of undistorted pixels."""
    xy = pixels_to_normalized(intr, pixels)
    rays = np.concatenate([xy, np.ones(xy.shape[:-1] + (1,))], axis=-1)
    return rays / np.linalg.norm(rays, axis=-1, keepdims=True)


def reprojection_errors(intr: CameraIntrinsics, pose: RigidPose, points: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    """Pinhole reprojection distance per point; inf for points behind the camera."""
    depth = pose.apply(points)[:, 2]
    with np.errstate(invalid="ignore"):
        errors = np.linalg.norm(project_pinhole(intr, pose, points) - pixels, axis=1)
    errors[~(depth > 0) | ~np.isfinite(errors)] = np.inf
    return errors


def _rms(errors: np.ndarray) -> float:
    return float(np.sqrt(np.mean(errors * errors)))


def check_configuration(points: np.ndarray, pixels: np.ndarray):
    if len(points) < 4:
        raise DegenerateConfiguration(f"PnP needs at least 4 correspondences, got {len(points)}")
    if len(np.unique(np.round(points, 9), axis=0)) < 4:
        raise DegenerateConfiguration("fewer than 4 distinct model points")
    spread = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    if spread[1] <= 1e-9 * max(spread[0], 1e-300):
        raise DegenerateConfiguration("model points are collinear")
    image_spread = np.linalg.svd(pixels - pixels.mean(axis=0), compute_uv=False)
    if image_spread[0] <= 1e-9:
        raise DegenerateConfiguration("image points coincide")


# ── Minimal solver ─────────────────────────────────────────────────────

def p3p(rays: np.ndarray, points: np.ndarray) -> list[RigidPose]:
    """All poses placing three model points on three viewing rays (OpenCV's AP3P).

    Rays pointing away from the image plane and coincident model points
    give no solution.
    """
    rays = np.asarray(rays, dtype=float)
    points = np.asarray(points, dtype=float)
    if np.any(rays[:, 2] <= 0):
        return []
    sides = [np.linalg.norm(points[i] - points[j]) for i, j in ((1, 2), (0, 2), (0, 1))]
    if min(sides) <= 1e-12:
        return []
    normalized = rays[:, :2] / rays[:, 2:]
    try:
        count, rvecs, tvecs = cv2.solveP3P(
            _object_points(points), _image_points(normalized), np.eye(3), None, cv2.SOLVEPNP_AP3P,
        )
    except cv2.error as e:
        logger.debug(f"P3P failed: {e}")
        return []
    return [from_rvec(rvec, tvec) for rvec, tvec in zip(rvecs[:count], tvecs[:count])]


def initial_poses(points: np.ndarray, pixels: np.ndarray, intr: CameraIntrinsics) -> list[RigidPose]:
    """Candidate starting poses from OpenCV's SQPnP and EPnP solvers."""
    candidates = []
    for method in START_METHODS:
        try:
            ok, rvec, tvec = cv2.solvePnP(_object_points(points), _image_points(pixels), intr.matrix, None, flags=method)
        except cv2.error as e:
            logger.debug(f"solvePnP start (flag {method}) failed: {e}")
            continue
        if ok:
            candidates.append(from_rvec(rvec, tvec))
    return candidates


# ── Refinement ─────────────────────────────────────────────────────────

def refine_pose(
    points: np.ndarray,
    pixels: np.ndarray,
    intr: CameraIntrinsics,
    pose: RigidPose,
    iterations: int = REFINE_ITERATIONS,
    tolerance: float = REFINE_TOLERANCE,
    distortion: bool = False,
    strict: bool = True,
):
    """Levenberg–Marquardt on squared reprojection residuals, one solvePnPRefineLM step per iteration.

    Returns (pose, per-iteration mean squared residual, converged). The
    solver works on points centred on their centroid. A step that does not
    lower the cost is retried once with the remaining budget, then ends the
    run. With `strict`, running out of iterations before the RMS change
    drops below `tolerance` raises NoConvergence.
    """
    centroid = points.mean(axis=0)
    centred = points - centroid
    current = RigidPose(pose.R, pose.t + pose.R @ centroid)
    projector = project if distortion else project_pinhole
    coefficients = opencv_distortion(intr) if distortion else None
    object_points, image_points = _object_points(centred), _image_points(pixels)

    def cost_of(candidate: RigidPose) -> float:
        if np.any(candidate.apply(centred)[:, 2] <= 0):
            return math.inf
        r = projector(intr, candidate, centred) - pixels
        return float(np.sum(r * r))

    def lm_step(start: RigidPose, count: int) -> RigidPose:
        rvec, tvec = to_rvec(start)
        criteria = (cv2.TERM_CRITERIA_COUNT | cv2.TERM_CRITERIA_EPS, count, np.finfo(float).eps)
        try:
            rvec, tvec = cv2.solvePnPRefineLM(
                object_points, image_points, intr.matrix, coefficients, rvec, tvec, criteria=criteria,
            )
        except cv2.error as e:
            raise NoConvergence(f"pose refinement failed: {e}") from e
        return from_rvec(rvec, tvec)

    cost = cost_of(current)
    trace = [cost / len(points)]
    converged = iterations == 0

    for done in range(iterations):
        candidate = lm_step(current, 1)
        cost_new = cost_of(candidate)
        if not (np.isfinite(cost_new) and cost_new < cost):
            # Stalled single step: retry once with the remaining budget.
            candidate = lm_step(current, iterations - done)
            cost_new = cost_of(candidate)
            if np.isfinite(cost_new) and cost_new < cost:
                current, cost = candidate, cost_new
                trace.append(cost / len(points))
            converged = True
            break

        old_rms = math.sqrt(cost / len(points))
        current, cost = candidate, cost_new
        trace.append(cost / len(points))
        if abs(old_rms - math.sqrt(cost / len(points))) < tolerance:
            converged = True
            break

    if not np.isfinite(cost):
        raise NoConvergence("pose refinement produced a non-finite residual")
    if strict and not converged:
        raise NoConvergence(f"pose refinement did not converge within {iterations} iterations")
    result = RigidPose(current.R, current.t - current.R @ centroid)
    return result, trace, converged


# ── Solvers ────────────────────────────────────────────────────────────

def _solve(points: np.ndarray, pixels: np.ndarray, intr: CameraIntrinsics) -> tuple[RigidPose, float]:
    check_configuration(points, pixels)
    candidates = initial_poses(points, pixels, intr)
    if not candidates:
        raise DegenerateConfiguration("no candidate pose places the points in front of the camera")
    scored = sorted(
        ((_rms(reprojection_errors(intr, pose, points, pixels)), i, pose) for i, pose in enumerate(candidates)),
        key=lambda item: (item[0], item[1]),
    )
    best_pose, best_rms = None, math.inf
    failure = None
    for score, _, pose in scored[:4]:
        if not np.isfinite(score):
            continue
        try:
            refined, _, _ = refine_pose(points, pixels, intr, pose)
        except NoConvergence as e:
            failure = e
            continue
        rms = _rms(reprojection_errors(intr, refined, points, pixels))
        if rms < best_rms:
            best_pose, best_rms = refined, rms
    if best_pose is None:
        raise failure or DegenerateConfiguration("no candidate pose places the points in front of the camera")
    return best_pose, best_rms


def pnp_register(corrs: Sequence[Correspondence], intr: CameraIntrinsics) -> RigidPose:
    """Pose minimising the squared pinhole reprojection residuals."""
    points, pixels = correspondence_arrays(corrs)
    pose, rms = _solve(points, pixels, intr)
    logger.debug(f"PnP on {len(points)} correspondences: RMS {rms:.4g} px")
    return pose


def pnp_rms(corrs: Sequence[Correspondence], intr: CameraIntrinsics, pose: RigidPose) -> float:
    points, pixels = correspondence_arrays(corrs)
    return _rms(reprojection_errors(intr, pose, points, pixels))


def _recompute(pose: RigidPose, intr: CameraIntrinsics, pools: dict) -> list[Correspondence]:
    """Pair every pooled 2D landmark pixel with its nearest projected 3D landmark of the same class."""
    corrs = []
    for landmark_class in sorted(pools):
        model_points, image_points = pools[landmark_class]
        if not len(model_points) or not len(image_points):
            continue
        depth = pose.apply(model_points)[:, 2]
        front = depth > 0
        if not front.any():
            continue
        projected = project_pinhole(intr, pose, model_points[front])
        _, nearest = cKDTree(projected).query(image_points)
        corrs.extend(
            Correspondence(p3, p2)
            for p3, p2 in zip(model_points[front][nearest], image_points)
        )
    return corrs


def pnp_ransac_register(
    corrs: Sequence[Correspondence],
    intr: CameraIntrinsics,
    threshold: float = 3.0,
    max_iters: int = 1000,
    seed: Optional[int] = None,
    confidence: float = 0.999,
    pools: Optional[dict] = None,
) -> tuple[RigidPose, list[Correspondence]]:
    """RANSAC over minimal 4-point samples (OpenCV's AP3P hypotheses), refit on inliers.

    The correspondence order is shuffled with `seed` before OpenCV's own
    fixed-seed sampler runs, so the result depends on the seed alone.
    With `pools` ({class: (model points, undistorted image points)}) the
    correspondences are then recomputed by nearest projection and refit,
    until the inlier set stops changing or after ten rounds.
    """
    corrs = list(corrs)
    points, pixels = correspondence_arrays(corrs)
    if len(points) < 4:
        raise DegenerateConfiguration(f"RANSAC needs at least 4 correspondences, got {len(points)}")
    order = np.random.default_rng(Config.SEED if seed is None else seed).permutation(len(points))

    try:
        ok, _, _, found = cv2.solvePnPRansac(
            _object_points(points[order]), _image_points(pixels[order]), intr.matrix, None,
            iterationsCount=max_iters, reprojectionError=threshold, confidence=confidence,
            flags=cv2.SOLVEPNP_AP3P,
        )
    except cv2.error as e:
        logger.debug(f"solvePnPRansac failed: {e}")
        ok, found = False, None
    best_inliers = np.sort(order[np.asarray(found).ravel()]) if ok and found is not None else np.zeros(0, dtype=np.int64)

    if len(best_inliers) < 4:
        raise NoModelFound(f"no sample reached 4 inliers within {max_iters} iterations (threshold {threshold} px)")
    logger.debug(f"RANSAC: {len(best_inliers)}/{len(points)} inliers")

    inliers = best_inliers
    pose, _ = _solve(points[inliers], pixels[inliers], intr)
    for _ in range(RECOMPUTE_ROUNDS):
        refreshed = np.nonzero(reprojection_errors(intr, pose, points, pixels) <= threshold)[0]
        if len(refreshed) < 4 or np.array_equal(refreshed, inliers):
            break
        inliers = refreshed
        pose, _ = _solve(points[inliers], pixels[inliers], intr)
    inlier_corrs = [corrs[i] for i in inliers]

    if pools:
        previous = None
        for round_index in range(RECOMPUTE_ROUNDS):
            candidates = _recompute(pose, intr, pools)
            cand_points, cand_pixels = correspondence_arrays(candidates)
            if not len(candidates):
                break
            keep = reprojection_errors(intr, pose, cand_points, cand_pixels) <= threshold
            current = frozenset(c for c, k in zip(candidates, keep) if k)
            if len(current) < 4 or current == previous:
                break
            try:
                pose, _ = _solve(cand_points[keep], cand_pixels[keep], intr)
            except (DegenerateConfiguration, NoConvergence) as e:
                logger.debug(f"Correspondence recomputation stopped in round {round_index + 1}: {e}")
                break
            previous = current
            inlier_corrs = [c for c, k in zip(candidates, keep) if k]
    return pose, inlier_corrs


# ── Curve correspondences ──────────────────────────────────────────────

def resample_curve(points: np.ndarray, count: int, reverse: bool = False) -> np.ndarray:
    """`count` points at equal arc length along a point cloud tracing one curve.

    Points are ordered along their principal direction and averaged in
    consecutive groups before resampling, so thick rasterized curves work.
    """
    points = np.asarray(points, dtype=float)
    centred = points - points.mean(axis=0)
    if len(points) > 1:
        direction = np.linalg.svd(centred, full_matrices=False)[2][0]
        ordered = points[np.argsort(centred @ direction, kind="stable")]
    else:
        ordered = points
    groups = max(2, min(len(ordered), 4 * count))
    polyline = np.array([chunk.mean(axis=0) for chunk in np.array_split(ordered, groups) if len(chunk)])
    if reverse:
        polyline = polyline[::-1]
    steps = np.linalg.norm(np.diff(polyline, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(steps)])
    if arc[-1] <= 0:
        return np.repeat(polyline[:1], count, axis=0)
    targets = np.linspace(0.0, arc[-1], count)
    return np.stack([np.interp(targets, arc, polyline[:, k]) for k in range(points.shape[1])], axis=1)


def undistort_target_pixels(intr: CameraIntrinsics, label_map: LandmarkMap2D, name: str) -> np.ndarray:
    pixels = label_map.pixels(name)
    if not len(pixels) or not intr.has_distortion:
        return pixels
    return undistort(intr, pixels)


def curve_correspondences(
    mesh: LabelledMesh,
    landmarks3d: LandmarkSet3D,
    target2d: LandmarkMap2D,
    intr: CameraIntrinsics,
    count: int = 20,
) -> list[Correspondence]:
    """Pair equally resampled 3D and 2D landmark curves class by class.

    Each curve's direction is ambiguous; every combination of orientations
    is tried and the one with the smallest PnP residual wins.
    """
    curves = []
    for landmark_class in ("ridge", "ligament"):
        indices = landmarks3d.sorted_indices(landmark_class)
        pixels = undistort_target_pixels(intr, target2d, landmark_class)
        if len(indices) < 2 or len(pixels) < 2:
            continue
        model_curve = resample_curve(mesh.vertices[indices], count)
        curves.append((landmark_class, model_curve, pixels))
    if not curves:
        raise DegenerateConfiguration("no landmark class is present in both the mesh and the image")

    best = None
    for flips in np.ndindex(*(2,) * len(curves)):
        corrs = []
        for (_, model_curve, pixels), flip in zip(curves, flips):
            image_curve = resample_curve(pixels, count, reverse=bool(flip))
            corrs.extend(Correspondence(p3, p2) for p3, p2 in zip(model_curve, image_curve))
        try:
            pose = pnp_register(corrs, intr)
        except (DegenerateConfiguration, NoConvergence):
            continue
        rms = pnp_rms(corrs, intr, pose)
        if best is None or rms < best[0]:
            best = (rms, corrs)
    if best is None:
        raise DegenerateConfiguration("landmark curves do not determine a pose")
    logger.debug(f"Curve correspondences: {len(best[1])} pairs, RMS {best[0]:.3g} px")
    return best[1]


def landmark_pools(
    mesh: LabelledMesh,
    landmarks3d: LandmarkSet3D,
    target2d: LandmarkMap2D,
    intr: CameraIntrinsics,
    limit: int = POOL_LIMIT,
) -> dict:
    """Per-class (model points, undistorted image points) for correspondence recomputation."""
    pools = {}
    for landmark_class in ("ridge", "ligament"):
        model_points = mesh.vertices[landmarks3d.sorted_indices(landmark_class)]
        pixels = target2d.pixels(landmark_class)
        if len(pixels) > limit:
            pixels = pixels[np.linspace(0, len(pixels) - 1, limit).astype(np.int64)]
        if len(pixels) and intr.has_distortion:
            pixels = undistort(intr, pixels)
        if len(model_points) and len(pixels):
            pools[landmark_class] = (model_points, pixels)
    return pools
