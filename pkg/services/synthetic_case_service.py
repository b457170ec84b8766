import logging
from typing import Optional

import numpy as np

from config import Config
from models import CameraIntrinsics, CaseBundle, LabelledMesh, RigidPose, SoftMask, SyntheticCase
from .case_repository import case_repository
from .initialization_service import init_random_pose
from .render_service import Raster, extract_view_silhouette, rasterize, render_landmarks

logger = logging.getLogger(__name__)

SYNTH_MAX_ANGLE_DEG = 30.0
LANDMARK_RADIUS_PX = 1.0
SILHOUETTE_DILATION_PX = 1
# Depth at which the mesh radius spans this share of the narrower half view
FILL_FRACTION = 0.6


def default_camera(width: int = 640, height: int = 480, focal: float = 700.0) -> CameraIntrinsics:
    """Distortion-free camera centred on the image."""
    return CameraIntrinsics(
        fx=focal, fy=focal, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0, width=width, height=height,
    )


def framing_depth(mesh: LabelledMesh, intr: CameraIntrinsics) -> float:
    """Depth (mm) at which the whole mesh comfortably fits in the image."""
    centroid = mesh.vertices.mean(axis=0)
    radius = float(np.max(np.linalg.norm(mesh.vertices - centroid, axis=1)))
    half_view_per_mm = min(intr.width / intr.fx, intr.height / intr.fy) / 2.0
    return radius / (FILL_FRACTION * half_view_per_mm) + radius


def shade(mesh: LabelledMesh, raster: Raster, seed: int) -> np.ndarray:
    """Lambert-shaded liver over a noisy background, RGB uint8."""
    height, width = raster.intr.shape
    rng = np.random.default_rng(seed)
    background = 30.0 + 10.0 * rng.random((height, width))

    tri = raster.cam[mesh.faces]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    normals /= np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-12)
    centres = tri.mean(axis=1)
    view = -centres / np.maximum(np.linalg.norm(centres, axis=1, keepdims=True), 1e-12)
    lambert = np.abs(np.einsum("ij,ij->i", normals, view))

    intensity = background
    covered = raster.face_index >= 0
    intensity = np.where(covered, 70.0 + 170.0 * lambert[np.maximum(raster.face_index, 0)], intensity)
    rgb = np.stack([intensity, 0.55 * intensity, 0.5 * intensity], axis=-1)
    return np.clip(np.round(rgb), 0, 255).astype(np.uint8)


def synth_case(
    mesh: LabelledMesh,
    intr: CameraIntrinsics,
    pose: Optional[RigidPose] = None,
    seed: Optional[int] = None,
    out_dir=None,
    case_id: str = "synthetic",
) -> SyntheticCase:
    """Render a registration case with a known pose.

    Without `pose`, one is drawn from `seed`: anterior side to the camera,
    tilted by at most 30° per axis, at a depth that frames the mesh. With
    `out_dir` the case is written and read back through its manifest.
    """
    seed = Config.SEED if seed is None else seed
    if pose is None:
        depth = framing_depth(mesh, intr)
        pose = init_random_pose(
            mesh,
            intr,
            rng_seed=seed,
            depth_range=(depth, depth),
            max_angle_deg=SYNTH_MAX_ANGLE_DEG,
            anterior=mesh.labels.anterior,
        )

    raster = rasterize(mesh, pose, intr)
    landmarks2d = render_landmarks(mesh, mesh.labels, pose, intr, point_radius=LANDMARK_RADIUS_PX, raster=raster)
    landmarks2d = landmarks2d.union(extract_view_silhouette(raster.mask, dilation=SILHOUETTE_DILATION_PX))
    mask = SoftMask(raster.mask.astype(float))
    image = shade(mesh, raster, seed)

    if out_dir is not None:
        manifest = case_repository.write_case(
            out_dir, case_id, mesh, mesh.labels, image, landmarks2d, intr, pose=pose, mask=mask
        )
        bundle = case_repository.load_bundle(manifest)
    else:
        bundle = CaseBundle(
            case_id=case_id,
            manifest_path=None,
            paths={},
            mesh=mesh,
            landmarks3d=mesh.labels,
            image=image,
            landmarks2d=landmarks2d,
            intr=intr,
            pose=pose,
            mask=mask,
        )

    logger.info(f"Synthesised case {case_id} (seed {seed}): {int(raster.mask.sum())} liver pixels")
    return SyntheticCase(bundle=bundle, gt_pose=pose, seed=seed, metadata={"depth": float(pose.apply(mesh.vertices.mean(axis=0))[2])})
