import logging
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from config import Config
from models import CameraIntrinsics, LabelledMesh, RigidPose
from models.errors import EmptySet, MissingCanonicalPose
from models.pose import nearest_rotation
from .camera_repository import camera_repository

logger = logging.getLogger(__name__)

TOWARD_CAMERA = np.array([0.0, 0.0, -1.0])


def anterior_rotation(anterior) -> np.ndarray:
    """Rotation turning the model's anterior direction toward the camera (−z)."""
    direction = np.asarray(anterior, dtype=float)
    direction = direction / np.linalg.norm(direction)
    axis = np.cross(direction, TOWARD_CAMERA)
    sin = np.linalg.norm(axis)
    cos = float(direction @ TOWARD_CAMERA)
    if sin < 1e-12:
        # Already facing the camera, or facing straight away: half-turn about x.
        return np.eye(3) if cos > 0 else np.diag([1.0, -1.0, -1.0])
    return Rotation.from_rotvec(axis / sin * np.arctan2(sin, cos)).as_matrix()


def sample_axis_angles(rng: np.random.Generator, max_angle_deg: float) -> np.ndarray:
    """Independent uniform angles in (−max, max) degrees about x, y and z."""
    return rng.uniform(-max_angle_deg, max_angle_deg, size=3)


def init_random_pose(
    mesh: LabelledMesh,
    intr: CameraIntrinsics,
    rng_seed: Optional[int] = None,
    depth_range: tuple = (300.0, 800.0),
    max_angle_deg: float = 90.0,
    anterior=None,
) -> RigidPose:
    """Anterior side toward the camera, then a random tilt.

    The vertex centroid, not the mesh origin, lands at (0, 0, depth):
    t = (0, 0, depth) - R @ centroid, which is (0, 0, depth) only for a mesh
    centred on the origin.
    """
    rng = np.random.default_rng(Config.SEED if rng_seed is None else rng_seed)
    anterior = mesh.labels.anterior if anterior is None else anterior
    angles = sample_axis_angles(rng, max_angle_deg)
    low, high = depth_range
    depth = rng.uniform(low, high) if high > low else float(low)

    R = Rotation.from_euler("xyz", angles, degrees=True).as_matrix() @ anterior_rotation(anterior)
    centroid = mesh.vertices.mean(axis=0)
    pose = RigidPose(R, np.array([0.0, 0.0, depth]) - R @ centroid)

    radius = float(np.max(np.linalg.norm(mesh.vertices - centroid, axis=1)))
    half_view = depth * min(intr.width / intr.fx, intr.height / intr.fy) / 2.0
    if radius > half_view:
        logger.debug(f"Mesh radius {radius:.1f} mm exceeds the half field of view {half_view:.1f} mm at depth {depth:.1f} mm")
    return pose


def average_poses(poses: Sequence[RigidPose]) -> RigidPose:
    """Chordal mean: nearest rotation to the mean matrix, mean translation."""
    if not poses:
        raise EmptySet("cannot average an empty list of poses")
    rotation = nearest_rotation(np.mean([p.R for p in poses], axis=0))
    translation = np.mean([p.t for p in poses], axis=0)
    return RigidPose(rotation, translation)


def init_canonical_pose(config_pose: Optional[RigidPose] = None, path: Optional[str] = None) -> RigidPose:
    """The configured canonical pose (given directly, by path, or via CANONICAL_POSE_PATH)."""
    if config_pose is not None:
        return config_pose
    path = path or Config.CANONICAL_POSE_PATH
    if not path:
        raise MissingCanonicalPose(
            "no canonical pose configured; pass --init-pose or set CANONICAL_POSE_PATH"
        )
    return camera_repository.load_pose(path)
