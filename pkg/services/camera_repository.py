import json
import logging
from pathlib import Path

from models import CameraIntrinsics, RigidPose
from models.errors import MissingAsset, ParseError

logger = logging.getLogger(__name__)


def read_json(path) -> dict:
    """Parse a JSON object, naming the file in every failure."""
    path = Path(path)
    if not path.is_file():
        raise MissingAsset("file not found", path=str(path))
    try:
        with path.open("r", encoding="utf-8") as handle:
            data = json.load(handle)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ParseError(f"invalid JSON: {e}", path=str(path)) from e
    if not isinstance(data, dict):
        raise ParseError("expected a JSON object", path=str(path))
    return data


def write_json(data: dict, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        json.dump(data, handle, indent=2, sort_keys=True)
        handle.write("\n")


class CameraRepository:
    """Repository for camera intrinsics and pose files."""

    def load_camera(self, path) -> CameraIntrinsics:
        """Load intrinsics from a camera JSON file."""
        intr = CameraIntrinsics.from_dict(read_json(path), path=str(path))
        logger.debug(f"Loaded camera {intr.width}x{intr.height} from {path}")
        return intr

    def save_camera(self, intr: CameraIntrinsics, path):
        write_json(intr.to_dict(), path)

    def load_pose(self, path) -> RigidPose:
        """Load a model-to-camera pose ({"R": 9 numbers, "t": 3 numbers})."""
        return RigidPose.from_dict(read_json(path), path=str(path))

    def save_pose(self, pose: RigidPose, path):
        write_json(pose.to_dict(), path)


# Global repository instance
camera_repository = CameraRepository()
