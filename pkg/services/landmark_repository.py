import logging
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, ImageDraw

from config import Config
from models import LandmarkMap2D, LandmarkSet3D, SoftMask
from models.errors import MissingAsset, ParseError
from models.landmark_map import LIGAMENT, RIDGE, SILHOUETTE
from .camera_repository import read_json, write_json
from .render_service import dilate_labels_2d

logger = logging.getLogger(__name__)

# Palette index -> class bits. 0-4 are the interchange palette; 5-7 cover
# the remaining combinations so every map round-trips.
PALETTE_BITS = (
    0,
    RIDGE,
    LIGAMENT,
    SILHOUETTE,
    RIDGE | LIGAMENT,
    RIDGE | SILHOUETTE,
    LIGAMENT | SILHOUETTE,
    RIDGE | LIGAMENT | SILHOUETTE,
)
PALETTE_COLORS = (
    (0, 0, 0),        # background
    (255, 0, 0),      # ridge
    (0, 0, 255),      # ligament
    (255, 255, 0),    # silhouette
    (255, 0, 255),
    (255, 128, 0),
    (0, 255, 0),
    (255, 255, 255),
)

_INDEX_OF_BITS = np.zeros(8, dtype=np.uint8)
for _index, _bits in enumerate(PALETTE_BITS):
    _INDEX_OF_BITS[_bits] = _index


def _open_image(path: Path) -> Image.Image:
    if not path.is_file():
        raise MissingAsset("image file not found", path=str(path))
    try:
        image = Image.open(path)
        image.load()
    except (OSError, SyntaxError) as e:
        raise ParseError(f"unreadable image: {e}", path=str(path)) from e
    return image


class LandmarkRepository:
    """Repository for 3D landmark files, 2D label maps, masks and images."""

    # ── 3D landmarks ─────────────────────────────────────────────────────

    def load_landmarks3d(self, path, vertex_count: Optional[int] = None) -> LandmarkSet3D:
        landmarks = LandmarkSet3D.from_dict(read_json(path), path=str(path))
        if vertex_count is not None:
            landmarks.validate(vertex_count, path=str(path))
        logger.debug(f"Loaded {len(landmarks.ridge)} ridge and {len(landmarks.ligament)} ligament indices from {path}")
        return landmarks

    def save_landmarks3d(self, landmarks: LandmarkSet3D, path):
        write_json(landmarks.to_dict(), path)

    # ── 2D label maps ────────────────────────────────────────────────────

    def load_label_map(self, path) -> LandmarkMap2D:
        """Read a paletted (or grayscale index) PNG into class bits."""
        path = Path(path)
        image = _open_image(path)
        if image.mode not in ("P", "L"):
            raise ParseError(f"label map must be a paletted PNG, got mode {image.mode}", path=str(path))
        indices = np.asarray(image)
        if indices.size and indices.max() >= len(PALETTE_BITS):
            raise ParseError(f"unknown label index {int(indices.max())}", path=str(path))
        return LandmarkMap2D(np.asarray(PALETTE_BITS, dtype=np.uint8)[indices])

    def save_label_map(self, label_map: LandmarkMap2D, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        image = Image.fromarray(_INDEX_OF_BITS[label_map.bits])
        image.putpalette([c for color in PALETTE_COLORS for c in color])
        image.save(path, format="PNG")

    def load_polylines(self, path, shape: tuple[int, int], width: Optional[int] = None) -> LandmarkMap2D:
        """Rasterise {"ridge": [[[u, v], ...], ...], ...} at 1 px, then widen to `width` px.

        Each class holds a list of polylines in pixel coordinates; missing
        classes are empty.
        """
        data = read_json(path)
        width = Config.POLYLINE_WIDTH_PX if width is None else width
        height_px, width_px = shape
        label_map = LandmarkMap2D.empty(width_px, height_px)
        for name in ("ridge", "ligament", "silhouette"):
            canvas = Image.new("L", (width_px, height_px), 0)
            draw = ImageDraw.Draw(canvas)
            try:
                for polyline in data.get(name, []):
                    points = [(float(u), float(v)) for u, v in polyline]
                    if len(points) == 1:
                        draw.point(points, fill=255)
                    elif points:
                        draw.line(points, fill=255, width=1)
            except (TypeError, ValueError) as e:
                raise ParseError(f"invalid {name} polyline: {e}", path=str(path)) from e
            label_map = label_map.with_channel(name, np.asarray(canvas) > 0)
        return dilate_labels_2d(label_map, (width - 1) / 2.0)

    # ── Masks and images ─────────────────────────────────────────────────

    def load_mask(self, path) -> SoftMask:
        path = Path(path)
        image = _open_image(path)
        return SoftMask(np.asarray(image.convert("L"), dtype=float) / 255.0)

    def save_mask(self, mask: SoftMask, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        values = np.round(mask.values * 255.0).astype(np.uint8)
        Image.fromarray(values).save(path, format="PNG")

    def load_image(self, path) -> np.ndarray:
        """RGB uint8 array (height, width, 3)."""
        return np.asarray(_open_image(Path(path)).convert("RGB"))

    def save_image(self, image: np.ndarray, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.asarray(image, dtype=np.uint8)).convert("RGB").save(path, format="PNG")


# Global repository instance
landmark_repository = LandmarkRepository()
