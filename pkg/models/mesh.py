from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import IndexMismatch, ParseError

LANDMARK_CLASSES = ("ridge", "ligament")


@dataclass(frozen=True)
class LandmarkSet3D:
    """Per-class vertex index sets; a vertex may belong to both classes."""
    ridge: frozenset = field(default_factory=frozenset)
    ligament: frozenset = field(default_factory=frozenset)
    anterior: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "ridge", frozenset(int(i) for i in self.ridge))
        object.__setattr__(self, "ligament", frozenset(int(i) for i in self.ligament))
        object.__setattr__(self, "anterior", tuple(float(a) for a in self.anterior))

    def indices(self, landmark_class: str) -> frozenset:
        if landmark_class not in LANDMARK_CLASSES:
            raise ValueError(f"Unknown landmark class '{landmark_class}'")
        return getattr(self, landmark_class)

    def sorted_indices(self, landmark_class: str) -> np.ndarray:
        return np.array(sorted(self.indices(landmark_class)), dtype=np.int64)

    def with_indices(self, landmark_class: str, indices: Iterable[int]) -> "LandmarkSet3D":
        values = {c: self.indices(c) for c in LANDMARK_CLASSES}
        values[landmark_class] = frozenset(indices)
        return LandmarkSet3D(anterior=self.anterior, **values)

    @property
    def all_indices(self) -> frozenset:
        return self.ridge | self.ligament

    def is_empty(self) -> bool:
        return not self.ridge and not self.ligament

    def validate(self, vertex_count: int, path: str = None):
        for landmark_class in LANDMARK_CLASSES:
            bad = [i for i in self.indices(landmark_class) if i < 0 or i >= vertex_count]
            if bad:
                message = (
                    f"{landmark_class} index {min(bad) if min(bad) < 0 else max(bad)} "
                    f"out of range for {vertex_count} vertices"
                )
                if path:
                    raise ParseError(message, path=path)
                raise IndexMismatch(message)

    @classmethod
    def from_dict(cls, data: dict, path: str = None) -> "LandmarkSet3D":
        try:
            anterior = data.get("anterior", (0.0, 0.0, 1.0))
            if len(anterior) != 3:
                raise ValueError("anterior must have 3 components")
            return cls(
                ridge=frozenset(int(i) for i in data.get("ridge", [])),
                ligament=frozenset(int(i) for i in data.get("ligament", [])),
                anterior=tuple(anterior),
            )
        except (TypeError, ValueError, AttributeError) as e:
            raise ParseError(f"invalid landmark file: {e}", path=path) from e

    def to_dict(self) -> dict:
        return {
            "anterior": list(self.anterior),
            "ridge": sorted(self.ridge),
            "ligament": sorted(self.ligament),
        }


@dataclass(frozen=True, eq=False)
class LabelledMesh:
    """Triangle mesh (millimetres) with per-class vertex labels."""
    vertices: np.ndarray
    faces: np.ndarray
    labels: LandmarkSet3D = field(default_factory=LandmarkSet3D)

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=float).reshape(-1, 3)
        faces = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(vertices)):
            raise ValueError("Mesh vertices must be finite")
        if faces.size:
            if faces.min() < 0 or faces.max() >= len(vertices):
                raise IndexMismatch(f"face index out of range for {len(vertices)} vertices")
            repeated = (
                (faces[:, 0] == faces[:, 1])
                | (faces[:, 1] == faces[:, 2])
                | (faces[:, 0] == faces[:, 2])
            )
            if np.any(repeated):
                raise IndexMismatch(f"face {int(np.argmax(repeated))} repeats a vertex")
        self.labels.validate(len(vertices))
        vertices.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray) -> "LabelledMesh":
        return LabelledMesh(vertices, self.faces, self.labels)

    def with_labels(self, labels: LandmarkSet3D) -> "LabelledMesh":
        return LabelledMesh(self.vertices, self.faces, labels)

    def landmark_points(self, landmark_class: str) -> np.ndarray:
        return self.vertices[self.labels.sorted_indices(landmark_class)]

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges (E, 2), lower index first."""
        return self._edge_table[0]

    @cached_property
    def edge_faces(self) -> np.ndarray:
        """The (up to) two faces adjacent to each edge, -1 where missing."""
        return self._edge_table[1]

    @cached_property
    def _edge_table(self) -> tuple:
        if not self.face_count:
            return np.zeros((0, 2), dtype=np.int64), np.zeros((0, 2), dtype=np.int64)
        half_edges = np.concatenate([
            self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]],
        ])
        half_edges.sort(axis=1)
        face_of = np.tile(np.arange(self.face_count), 3)
        edges, inverse = np.unique(half_edges, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)

        order = np.argsort(inverse, kind="stable")
        sorted_edges = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_edges[1:] != sorted_edges[:-1]
        adjacency = np.full((len(edges), 2), -1, dtype=np.int64)
        adjacency[sorted_edges[first], 0] = face_of[order[first]]
        second = np.zeros(len(order), dtype=bool)
        second[1:] = ~first[1:] & first[:-1]
        adjacency[sorted_edges[second], 1] = face_of[order[second]]
        return edges, adjacency

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        """Boolean mask of vertices touching an edge with a single adjacent face."""
        mask = np.zeros(self.vertex_count, dtype=bool)
        boundary = self.edge_faces[:, 1] < 0
        mask[self.edges[boundary].reshape(-1)] = True
        return mask
