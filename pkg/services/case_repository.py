import csv
import logging
import sys
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from models import CameraIntrinsics, CaseBundle, LabelledMesh, LandmarkMap2D, LandmarkSet3D, RegistrationResult, RigidPose, SoftMask
from models.case import MANIFEST_ASSETS, OPTIONAL_ASSETS
from models.errors import DimensionMismatch, MissingAsset, ParseError
from .camera_repository import camera_repository, read_json, write_json
from .landmark_repository import landmark_repository
from .mesh_repository import mesh_repository

logger = logging.getLogger(__name__)

TRACE_HEADER = ("restart", "iteration", "loss")

# File names used by write_case
ASSET_FILES = {
    "mesh": "mesh.obj",
    "landmarks3d": "landmarks3d.json",
    "image": "image.png",
    "landmarks2d": "landmarks2d.png",
    "camera": "camera.json",
    "pose": "pose.json",
    "mask": "mask.png",
}


def check_shape(shape: tuple, intr: CameraIntrinsics, path: Path, what: str):
    if tuple(shape[:2]) != intr.shape:
        raise DimensionMismatch(
            f"{what} is {shape[1]}x{shape[0]} but camera is {intr.width}x{intr.height}",
            path=str(path),
        )


class CaseRepository:
    """Repository for case manifests and the CSV files written per run."""

    def read_manifest(self, manifest_path) -> tuple[str, dict]:
        """Case id and absolute asset paths (relative entries resolve against the manifest)."""
        manifest_path = Path(manifest_path)
        data = read_json(manifest_path)
        missing = [key for key in MANIFEST_ASSETS if not data.get(key)]
        if missing:
            raise ParseError(f"manifest lacks {', '.join(missing)}", path=str(manifest_path))

        paths = {}
        for key in MANIFEST_ASSETS + OPTIONAL_ASSETS:
            if data.get(key):
                paths[key] = (manifest_path.parent / str(data[key])).resolve()
        for key, path in paths.items():
            if not path.is_file():
                raise MissingAsset(f"{key} asset not found", path=str(path))

        case_id = str(data.get("case_id") or manifest_path.stem)
        return case_id, paths

    def load_bundle(self, manifest_path) -> CaseBundle:
        """Parse and cross-validate every asset a manifest references."""
        manifest_path = Path(manifest_path)
        case_id, paths = self.read_manifest(manifest_path)

        intr = camera_repository.load_camera(paths["camera"])
        landmarks3d = landmark_repository.load_landmarks3d(paths["landmarks3d"])
        mesh = mesh_repository.load(paths["mesh"])
        landmarks3d.validate(mesh.vertex_count, path=str(paths["landmarks3d"]))
        mesh = mesh.with_labels(landmarks3d)

        image = landmark_repository.load_image(paths["image"])
        check_shape(image.shape, intr, paths["image"], "image")

        if paths["landmarks2d"].suffix.lower() == ".json":
            landmarks2d = landmark_repository.load_polylines(paths["landmarks2d"], intr.shape)
        else:
            landmarks2d = landmark_repository.load_label_map(paths["landmarks2d"])
            check_shape(landmarks2d.shape, intr, paths["landmarks2d"], "label map")

        pose = camera_repository.load_pose(paths["pose"]) if "pose" in paths else None
        mask = None
        if "mask" in paths:
            mask = landmark_repository.load_mask(paths["mask"])
            check_shape(mask.shape, intr, paths["mask"], "mask")

        logger.info(f"Loaded case {case_id} from {manifest_path}")
        return CaseBundle(
            case_id=case_id,
            manifest_path=manifest_path,
            paths=paths,
            mesh=mesh,
            landmarks3d=landmarks3d,
            image=image,
            landmarks2d=landmarks2d,
            intr=intr,
            pose=pose,
            mask=mask,
        )

    def write_case(
        self,
        out_dir,
        case_id: str,
        mesh: LabelledMesh,
        landmarks3d: LandmarkSet3D,
        image: np.ndarray,
        landmarks2d: LandmarkMap2D,
        intr: CameraIntrinsics,
        pose: Optional[RigidPose] = None,
        mask: Optional[SoftMask] = None,
    ) -> Path:
        """Write every asset plus a manifest naming them; returns the manifest path."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        mesh_repository.save(mesh, out_dir / ASSET_FILES["mesh"])
        landmark_repository.save_landmarks3d(landmarks3d, out_dir / ASSET_FILES["landmarks3d"])
        landmark_repository.save_image(image, out_dir / ASSET_FILES["image"])
        landmark_repository.save_label_map(landmarks2d, out_dir / ASSET_FILES["landmarks2d"])
        camera_repository.save_camera(intr, out_dir / ASSET_FILES["camera"])

        manifest = {"case_id": case_id}
        manifest.update({key: ASSET_FILES[key] for key in MANIFEST_ASSETS})
        if pose is not None:
            camera_repository.save_pose(pose, out_dir / ASSET_FILES["pose"])
            manifest["pose"] = ASSET_FILES["pose"]
        if mask is not None:
            landmark_repository.save_mask(mask, out_dir / ASSET_FILES["mask"])
            manifest["mask"] = ASSET_FILES["mask"]

        manifest_path = out_dir / "manifest.json"
        write_json(manifest, manifest_path)
        logger.info(f"Wrote case {case_id} to {out_dir}")
        return manifest_path

    def write_trace(self, result: RegistrationResult, path):
        self.write_report(TRACE_HEADER, [
            [restart, iteration, repr(loss)] for restart, iteration, loss in result.trace_rows()
        ], path)

    def write_report(self, header: Sequence[str], rows: Iterable[Sequence], path=None):
        """Write CSV rows to `path`, or to stdout when no path is given."""
        if path is None:
            writer = csv.writer(sys.stdout, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
            return
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)

    def read_batch(self, path, columns: Sequence[str]) -> list[dict]:
        """Rows of a batch CSV; every column except `case` is a path relative to the CSV."""
        path = Path(path)
        if not path.is_file():
            raise MissingAsset("batch file not found", path=str(path))
        with path.open("r", newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            missing = [c for c in columns if c not in (reader.fieldnames or [])]
            if missing:
                raise ParseError(f"batch file lacks column(s) {', '.join(missing)}", path=str(path))
            rows = []
            for line_number, row in enumerate(reader, start=2):
                entry = {}
                for column in columns:
                    value = (row.get(column) or "").strip()
                    if not value:
                        raise ParseError(f"line {line_number}: empty {column}", path=str(path))
                    entry[column] = value if column == "case" else (path.parent / value).resolve()
                rows.append(entry)
        return rows


# Global repository instance
case_repository = CaseRepository()
