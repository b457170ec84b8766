from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .camera import CameraIntrinsics
from .landmark_map import LandmarkMap2D, SoftMask
from .mesh import LabelledMesh, LandmarkSet3D
from .pose import RigidPose

MANIFEST_ASSETS = ("mesh", "landmarks3d", "image", "landmarks2d", "camera")
OPTIONAL_ASSETS = ("pose", "mask")


@dataclass(frozen=True, eq=False)
class CaseBundle:
    """One registration case: assets referenced by a manifest, parsed."""
    case_id: str
    manifest_path: Path
    paths: dict
    mesh: LabelledMesh
    landmarks3d: LandmarkSet3D
    image: np.ndarray
    landmarks2d: LandmarkMap2D
    intr: CameraIntrinsics
    pose: Optional[RigidPose] = None
    mask: Optional[SoftMask] = None

    @property
    def patient_id(self) -> str:
        return self.case_id.split("_")[0]

    @property
    def frame_id(self) -> str:
        parts = self.case_id.split("_", 1)
        return parts[1] if len(parts) > 1 else ""

    def path(self, asset: str) -> Optional[Path]:
        return self.paths.get(asset)


@dataclass(frozen=True, eq=False)
class SyntheticCase:
    bundle: CaseBundle
    gt_pose: RigidPose
    seed: Optional[int] = None
    metadata: dict = field(default_factory=dict)
