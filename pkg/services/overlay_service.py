import logging

import numpy as np

from models import CaseBundle, LandmarkMap2D, RigidPose
from models.errors import EmptyProjection
from .failure_log_service import report_failure
from .landmark_repository import landmark_repository
from .render_service import extract_view_silhouette, rasterize, render_landmarks

logger = logging.getLogger(__name__)

OVERLAY_COLORS = {
    "silhouette": (255, 255, 0),
    "ridge": (255, 0, 0),
    "ligament": (0, 0, 255),
}
# Later classes are drawn over earlier ones
DRAW_ORDER = ("silhouette", "ridge", "ligament")


def paint(image: np.ndarray, label_map: LandmarkMap2D) -> np.ndarray:
    result = np.array(image, dtype=np.uint8, copy=True)
    for name in DRAW_ORDER:
        result[label_map.channel(name)] = OVERLAY_COLORS[name]
    return result


def overlay_map(bundle: CaseBundle, pose: RigidPose) -> LandmarkMap2D:
    """Upper silhouette and visible landmark points of the model under `pose`."""
    raster = rasterize(bundle.mesh, pose, bundle.intr)
    landmarks = render_landmarks(bundle.mesh, bundle.landmarks3d, pose, bundle.intr, point_radius=1.0, raster=raster)
    return landmarks.union(extract_view_silhouette(raster.mask, dilation=1))


def render_overlay(bundle: CaseBundle, pose: RigidPose, out_path=None, record_path=None) -> np.ndarray:
    """Composite the registered model over the case image; optionally write the PNG.

    When the model does not project into the image the original image is
    returned (and written) unchanged and a warning record is emitted.
    """
    try:
        image = paint(bundle.image, overlay_map(bundle, pose))
    except EmptyProjection as e:
        report_failure(
            "render-overlay",
            f"case {bundle.case_id}: model does not project into the image, writing it unmodified",
            e,
            record_path=record_path,
            level=logging.WARNING,
        )
        image = np.array(bundle.image, dtype=np.uint8, copy=True)

    if out_path is not None:
        landmark_repository.save_image(image, out_path)
        logger.info(f"Wrote overlay for case {bundle.case_id} to {out_path}")
    return image
