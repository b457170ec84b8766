"""Evaluation metrics for 2D landmark detection, 3D landmarks and registration.

Pixel sets are accepted either as boolean masks (height, width) or as (N, 2)
arrays of (u, v) coordinates; duplicates are ignored. Metrics that are
undefined for their inputs return None, which reports print as NA or F.
"""
import logging
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from config import Config
from models import (
    CameraIntrinsics,
    ClassScores2D,
    LabelledMesh,
    LandmarkMap2D,
    LandmarkSet3D,
    LANDMARK_CLASSES,
    MAP_CLASSES,
    Metric2DReport,
    Metric3DReport,
    RegistrationReport,
    RigidPose,
)
from models.errors import ConfigurationError, DimensionMismatch, EmptySet, NonPositiveDenominator
from .geometry_service import in_image
from .render_service import NEAR_PLANE_MM, rasterize, visible_vertices

logger = logging.getLogger(__name__)


def pixel_set(pixels) -> np.ndarray:
    """Unique (N, 2) float coordinates of a mask or point array."""
    pixels = np.asarray(pixels)
    if pixels.dtype == bool and pixels.ndim == 2:
        rows, cols = np.nonzero(pixels)
        return np.stack([cols, rows], axis=1).astype(float)
    points = pixels.astype(float).reshape(-1, 2)
    if not len(points):
        return points
    return np.unique(points, axis=0)


def _domain(pred, gt) -> Optional[int]:
    for pixels in (pred, gt):
        pixels = np.asarray(pixels)
        if pixels.dtype == bool and pixels.ndim == 2:
            return int(pixels.size)
    return None


def nearest_distances(points: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Euclidean distance from every point to its nearest reference point."""
    if not len(points):
        return np.zeros(0)
    if not len(reference):
        return np.full(len(points), np.inf)
    distances, _ = cKDTree(reference).query(points)
    return distances


# ── 2D landmark detection ──────────────────────────────────────────────

def precision(pred, gt, tolerance: float = 0.0) -> Optional[float]:
    """Share of predicted pixels within `tolerance` px of a ground-truth pixel."""
    pred_points, gt_points = pixel_set(pred), pixel_set(gt)
    if not len(pred_points):
        return None
    true_positives = nearest_distances(pred_points, gt_points) <= tolerance
    return float(np.count_nonzero(true_positives) / len(pred_points))


def dsc(pred, gt) -> Optional[float]:
    pred_points, gt_points = pixel_set(pred), pixel_set(gt)
    total = len(pred_points) + len(gt_points)
    if total == 0:
        return None
    overlap = np.count_nonzero(nearest_distances(pred_points, gt_points) == 0.0)
    return float(2.0 * overlap / total)


def symmetric_distance_score(
    pred,
    gt,
    d_max: Optional[float] = None,
    domain_size: Optional[int] = None,
) -> Optional[float]:
    """Curve score combining proximity, spurious pixels and missed pixels (0 is perfect).

    Q is the band of radius d_max around the ground truth. Predicted pixels
    outside Q are false positives; ground-truth pixels with no prediction
    within d_max are false negatives. The proximity term averages the
    nearest distances between the remaining pixels over 2·|gt|·d_max.
    """
    d_max = Config.SYMMETRIC_D_MAX if d_max is None else float(d_max)
    domain_size = _domain(pred, gt) if domain_size is None else int(domain_size)
    if domain_size is None:
        raise ConfigurationError("domain_size is required when pixel sets are given as coordinates")

    pred_points, gt_points = pixel_set(pred), pixel_set(gt)
    if not len(gt_points):
        return None
    denominator = domain_size - 2.0 * len(gt_points) * d_max
    if denominator <= 0:
        raise NonPositiveDenominator(
            f"|I| = {domain_size} is not larger than 2·|gt|·d_max = {2.0 * len(gt_points) * d_max:g}"
        )

    in_band = nearest_distances(pred_points, gt_points) <= d_max
    missed = nearest_distances(gt_points, pred_points) > d_max
    pred_kept = pred_points[in_band]
    gt_kept = gt_points[~missed]

    proximity = 0.0
    if len(pred_kept) and len(gt_kept):
        proximity = (
            nearest_distances(pred_kept, gt_kept).sum() + nearest_distances(gt_kept, pred_kept).sum()
        ) / (2.0 * len(gt_points) * d_max)

    false_positives = np.count_nonzero(~in_band)
    false_negatives = np.count_nonzero(missed)
    return float(proximity + false_positives / denominator + false_negatives / len(gt_points))


def evaluate_2d(
    pred_map: LandmarkMap2D,
    gt_map: LandmarkMap2D,
    tolerance: float = 0.0,
    d_max: Optional[float] = None,
    case_id: str = "",
) -> Metric2DReport:
    """Per-class precision, DSC and symmetric score; classes absent from gt are NA."""
    if pred_map.shape != gt_map.shape:
        raise DimensionMismatch(
            f"prediction is {pred_map.width}x{pred_map.height} but ground truth is {gt_map.width}x{gt_map.height}"
        )
    scores = {}
    for name in MAP_CLASSES:
        pred, gt = pred_map.channel(name), gt_map.channel(name)
        if not gt.any():
            scores[name] = ClassScores2D(present=False)
            continue
        scores[name] = ClassScores2D(
            precision=precision(pred, gt, tolerance),
            dsc=dsc(pred, gt),
            symmetric_score=symmetric_distance_score(pred, gt, d_max),
        )
    return Metric2DReport(case_id=case_id, **scores)


# ── 3D landmarks ───────────────────────────────────────────────────────

def chamfer3d(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean squared nearest-neighbour distance in both directions, summed (mm²)."""
    pred = np.asarray(pred, dtype=float).reshape(-1, 3)
    gt = np.asarray(gt, dtype=float).reshape(-1, 3)
    if not len(pred) or not len(gt):
        raise EmptySet("chamfer distance needs two non-empty point sets")
    forward = nearest_distances(pred, gt)
    backward = nearest_distances(gt, pred)
    return float(np.mean(forward ** 2) + np.mean(backward ** 2))


def mean_chamfer(
    pred_landmarks: LandmarkSet3D,
    gt_landmarks: LandmarkSet3D,
    mesh: LabelledMesh,
    case_id: str = "",
) -> Metric3DReport:
    pred_landmarks.validate(mesh.vertex_count)
    gt_landmarks.validate(mesh.vertex_count)
    values = {}
    for landmark_class in LANDMARK_CLASSES:
        try:
            values[landmark_class] = chamfer3d(
                mesh.vertices[pred_landmarks.sorted_indices(landmark_class)],
                mesh.vertices[gt_landmarks.sorted_indices(landmark_class)],
            )
        except EmptySet:
            logger.debug(f"{case_id}: {landmark_class} chamfer failed (empty prediction or ground truth)")
            values[landmark_class] = None
    return Metric3DReport(case_id=case_id, chamfer_ridge=values["ridge"], chamfer_ligament=values["ligament"])


# ── Registration ───────────────────────────────────────────────────────

def hausdorff2d(a, b) -> float:
    a_points, b_points = pixel_set(a), pixel_set(b)
    if not len(a_points) or not len(b_points):
        raise EmptySet("Hausdorff distance needs two non-empty pixel sets")
    return float(max(nearest_distances(a_points, b_points).max(), nearest_distances(b_points, a_points).max()))


def projected_landmarks(
    pose: RigidPose,
    landmarks: LandmarkSet3D,
    mesh: LabelledMesh,
    intr: CameraIntrinsics,
    landmark_class: str,
    raster=None,
) -> np.ndarray:
    """Image positions of a class's vertices under `pose`.

    Vertices behind the camera are dropped, and so are vertices that land
    inside the image but are hidden by the surface.
    """
    raster = raster or rasterize(mesh, pose, intr, allow_empty=True)
    indices = landmarks.sorted_indices(landmark_class)
    if not len(indices):
        return np.zeros((0, 2))
    uv = raster.uv[indices]
    in_front = raster.cam[indices, 2] > NEAR_PLANE_MM
    inside = in_front & in_image(intr, np.where(in_front[:, None], uv, -1.0))
    visible = np.isin(indices, visible_vertices(mesh, pose, intr, raster=raster, indices=indices))
    keep = in_front & (~inside | visible)
    return uv[keep]


def reprojection_error(
    pose: RigidPose,
    gt3d: LandmarkSet3D,
    mesh: LabelledMesh,
    gt2d: LandmarkMap2D,
    intr: CameraIntrinsics,
    case_id: str = "",
) -> RegistrationReport:
    """Symmetric nearest-neighbour pixel error per class plus a 2D Hausdorff distance."""
    if gt2d.shape != intr.shape:
        raise DimensionMismatch(
            f"landmark map is {gt2d.width}x{gt2d.height} but camera is {intr.width}x{intr.height}"
        )
    raster = rasterize(mesh, pose, intr, allow_empty=True)
    errors = {}
    projected_all, target_all = [], []
    for landmark_class in LANDMARK_CLASSES:
        target = gt2d.pixels(landmark_class)
        projected = projected_landmarks(pose, gt3d, mesh, intr, landmark_class, raster=raster)
        if not len(target) or not len(projected):
            logger.debug(f"{case_id}: {landmark_class} reprojection failed ({len(projected)} projected, {len(target)} target pixels)")
            errors[landmark_class] = None
            continue
        errors[landmark_class] = float(
            (nearest_distances(projected, target).mean() + nearest_distances(target, projected).mean()) / 2.0
        )
        projected_all.append(projected)
        target_all.append(target)

    hausdorff = None
    if projected_all:
        hausdorff = hausdorff2d(np.concatenate(projected_all), np.concatenate(target_all))
    return RegistrationReport(
        case_id=case_id,
        rpe_ridge=errors["ridge"],
        rpe_ligament=errors["ligament"],
        hausdorff=hausdorff,
    )


# ── Batches ────────────────────────────────────────────────────────────

def _mean(values) -> Optional[float]:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def batch_means(reports: Sequence):
    """A "mean" row averaging every field over the cases where it is defined."""
    if not reports:
        raise EmptySet("no reports to average")
    first = reports[0]
    if isinstance(first, Metric2DReport):
        classes = {}
        for name in MAP_CLASSES:
            present = [r.scores(name) for r in reports if r.scores(name).present]
            classes[name] = ClassScores2D(
                precision=_mean(s.precision for s in present),
                dsc=_mean(s.dsc for s in present),
                symmetric_score=_mean(s.symmetric_score for s in present),
                present=bool(present),
            )
        return Metric2DReport(case_id="mean", **classes)
    if isinstance(first, Metric3DReport):
        return Metric3DReport(
            case_id="mean",
            chamfer_ridge=_mean(r.chamfer_ridge for r in reports),
            chamfer_ligament=_mean(r.chamfer_ligament for r in reports),
        )
    return RegistrationReport(
        case_id="mean",
        rpe_ridge=_mean(r.rpe_ridge for r in reports),
        rpe_ligament=_mean(r.rpe_ligament for r in reports),
        hausdorff=_mean(r.hausdorff for r in reports),
    )
