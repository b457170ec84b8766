import logging
from pathlib import Path
from typing import Optional

import numpy as np

from models import LabelledMesh, LandmarkSet3D
from models.errors import IndexMismatch, MissingAsset, ParseError

logger = logging.getLogger(__name__)


def _vertex_index(token: str, vertex_count: int) -> int:
    """0-based index of an OBJ face token ('7', '7/1', '7//3' or negative)."""
    value = int(token.split("/")[0])
    if value == 0:
        raise ValueError("OBJ indices start at 1")
    return value - 1 if value > 0 else vertex_count + value


class MeshRepository:
    """Repository for Wavefront OBJ meshes."""

    def load(self, path, labels: Optional[LandmarkSet3D] = None) -> LabelledMesh:
        """Read v/f records; polygons are fan-triangulated, other records ignored."""
        path = Path(path)
        if not path.is_file():
            raise MissingAsset("mesh file not found", path=str(path))

        vertices, faces = [], []
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except UnicodeDecodeError as e:
            raise ParseError(f"not a text OBJ file: {e}", path=str(path)) from e

        for line_number, line in enumerate(lines, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v":
                    if len(parts) < 4:
                        raise ValueError("vertex needs 3 coordinates")
                    vertices.append([float(p) for p in parts[1:4]])
                elif parts[0] == "f":
                    if len(parts) < 4:
                        raise ValueError("face needs at least 3 vertices")
                    polygon = [_vertex_index(p, len(vertices)) for p in parts[1:]]
                    for k in range(1, len(polygon) - 1):
                        faces.append([polygon[0], polygon[k], polygon[k + 1]])
            except ValueError as e:
                raise ParseError(f"line {line_number}: {e}", path=str(path)) from e

        if not vertices:
            raise ParseError("no vertices", path=str(path))
        try:
            mesh = LabelledMesh(np.array(vertices), np.array(faces, dtype=np.int64).reshape(-1, 3),
                                labels or LandmarkSet3D())
        except (IndexMismatch, ValueError) as e:
            raise ParseError(str(e), path=str(path)) from e

        logger.info(f"Loaded mesh {path.name}: {mesh.vertex_count} vertices, {mesh.face_count} faces")
        return mesh

    def save(self, mesh: LabelledMesh, path):
        """Write vertices with round-trip float precision and 1-based faces."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"# {mesh.vertex_count} vertices, {mesh.face_count} faces"]
        lines.extend(f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist())
        lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist())
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# Global repository instance
mesh_repository = MeshRepository()
