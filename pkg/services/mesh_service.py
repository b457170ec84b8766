import logging
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from config import Config
from models import LabelledMesh, LandmarkSet3D, LANDMARK_CLASSES
from models.errors import ConnectivityMismatch, DegenerateExtent, IndexMismatch

logger = logging.getLogger(__name__)


def normalize_vertices(mesh: LabelledMesh) -> LabelledMesh:
    """Centre each axis on its mean and divide by its extent (max − min)."""
    if mesh.vertex_count == 0:
        raise DegenerateExtent("cannot normalise an empty mesh")
    vertices = mesh.vertices
    extent = vertices.max(axis=0) - vertices.min(axis=0)
    if np.any(extent <= 0):
        axes = ", ".join("xyz"[i] for i in np.nonzero(extent <= 0)[0])
        raise DegenerateExtent(f"zero extent along axis {axes}")
    return mesh.with_vertices((vertices - vertices.mean(axis=0)) / extent)


def dilate_labels_3d(
    mesh: LabelledMesh,
    landmark_class: str,
    radius: float = None,
    passes: int = None,
) -> LabelledMesh:
    """Grow a landmark class to every vertex within `radius` mm, `passes` times.

    Each pass measures Euclidean distances from the labels present at the
    start of that pass.
    """
    radius = Config.DILATION_RADIUS_MM if radius is None else radius
    passes = Config.DILATION_PASSES if passes is None else passes
    if radius <= 0:
        raise ValueError(f"dilation radius must be positive, got {radius}")
    if passes < 1:
        raise ValueError(f"dilation passes must be >= 1, got {passes}")

    labelled = np.zeros(mesh.vertex_count, dtype=bool)
    labelled[mesh.labels.sorted_indices(landmark_class)] = True
    if not labelled.any():
        return mesh

    tree = cKDTree(mesh.vertices)
    for pass_index in range(passes):
        neighbours = tree.query_ball_point(mesh.vertices[labelled], r=radius)
        grown = labelled.copy()
        for group in neighbours:
            grown[group] = True
        gained = int(grown.sum() - labelled.sum())
        logger.debug(f"Dilation pass {pass_index + 1} of {landmark_class}: +{gained} vertices")
        labelled = grown
        if gained == 0:
            break

    labels = mesh.labels.with_indices(landmark_class, np.nonzero(labelled)[0])
    return mesh.with_labels(labels)


def merge_view_landmarks(
    per_view: Sequence[LandmarkSet3D],
    vertex_count: Optional[int] = None,
) -> LandmarkSet3D:
    """Class-wise union of per-view landmark sets."""
    if not per_view:
        return LandmarkSet3D()
    if vertex_count is not None:
        for view_index, view in enumerate(per_view):
            try:
                view.validate(vertex_count)
            except IndexMismatch as e:
                raise IndexMismatch(f"view {view_index}: {e}") from e
    merged = {c: frozenset().union(*(v.indices(c) for v in per_view)) for c in LANDMARK_CLASSES}
    return LandmarkSet3D(anterior=per_view[0].anterior, **merged)


def _adjacency(mesh: LabelledMesh) -> sparse.csr_matrix:
    edges = mesh.edges
    n = mesh.vertex_count
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    data = np.ones(len(rows))
    return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))


def laplacian_smoothness(mesh: LabelledMesh) -> float:
    """Mean squared offset of each vertex from its one-ring centroid.

    Uses uniform weights over interior vertices; boundary vertices are left
    out because their ring is one-sided. Meshes without interior vertices
    fall back to every connected vertex. Isolated vertices count with 0.
    """
    adjacency = _adjacency(mesh)
    degree = np.asarray(adjacency.sum(axis=1)).reshape(-1)
    connected = degree > 0
    if not connected.any():
        return 0.0
    ring_sum = adjacency @ mesh.vertices
    centroid = ring_sum[connected] / degree[connected, None]
    offsets = np.zeros_like(mesh.vertices)
    offsets[connected] = mesh.vertices[connected] - centroid
    squared = np.sum(offsets * offsets, axis=1)

    interior = connected & ~mesh.boundary_vertices
    selection = (interior if interior.any() else connected) | ~connected
    return float(squared[selection].mean())


def edge_lengths(mesh: LabelledMesh) -> np.ndarray:
    edges = mesh.edges
    return np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1)


def edge_length_statistics(mesh: LabelledMesh) -> tuple[float, float]:
    """Mean and standard deviation of edge lengths, for edge-length normalisation."""
    lengths = edge_lengths(mesh)
    if not len(lengths):
        return 0.0, 0.0
    return float(lengths.mean()), float(lengths.std())


def edge_length_penalty(mesh: LabelledMesh, reference: LabelledMesh) -> float:
    """Mean squared change of edge length against a reference with the same faces."""
    if mesh.faces.shape != reference.faces.shape or not np.array_equal(mesh.faces, reference.faces):
        raise ConnectivityMismatch("meshes do not share the same faces")
    if mesh.vertex_count != reference.vertex_count:
        raise ConnectivityMismatch(
            f"vertex counts differ ({mesh.vertex_count} vs {reference.vertex_count})"
        )
    difference = edge_lengths(mesh) - edge_lengths(reference)
    if not len(difference):
        return 0.0
    return float(np.mean(difference * difference))


# ── Synthetic liver meshes ─────────────────────────────────────────────

def icosphere(subdivisions: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere with outward-facing counter-clockwise faces."""
    phi = (1.0 + 5.0 ** 0.5) / 2.0
    vertices = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    vertices = [np.array(v, dtype=float) / np.linalg.norm(v) for v in vertices]

    for _ in range(subdivisions):
        midpoint_cache = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoint_cache:
                m = vertices[a] + vertices[b]
                vertices.append(m / np.linalg.norm(m))
                midpoint_cache[key] = len(vertices) - 1
            return midpoint_cache[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
        faces = refined

    return np.array(vertices), np.array(faces, dtype=np.int64)


def make_liver_blob(
    subdivisions: int = 3,
    radii: tuple = (120.0, 80.0, 60.0),
    bump: float = 0.08,
    seed: int = 0,
    ridge_band: float = 0.55,
    ligament_width: float = 0.12,
) -> LabelledMesh:
    """Icosphere-derived liver stand-in with painted landmarks.

    The anterior side is +z. The ridge is the arc of anterior vertices along
    the lower (−y) margin; the ligament is the anterior meridian above the
    centre (|x| small, y > 0).
    """
    unit, faces = icosphere(subdivisions)
    rng = np.random.default_rng(seed)
    # Smooth low-frequency bumps keep the blob from being perfectly symmetric.
    frequencies = rng.normal(size=(3, 3))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    modulation = 1.0 + bump * np.sum(np.sin(unit @ frequencies.T + phases), axis=1) / 3.0
    vertices = unit * modulation[:, None] * np.asarray(radii, dtype=float)

    x, y, z = unit[:, 0], unit[:, 1], unit[:, 2]
    anterior = z > 0.2
    ridge = np.nonzero(anterior & (y < -ridge_band) & (y > -ridge_band - 0.25))[0]
    ligament = np.nonzero(anterior & (np.abs(x) < ligament_width) & (y > 0.1) & (z > 0.35))[0]

    labels = LandmarkSet3D(ridge=ridge, ligament=ligament)
    logger.debug(
        f"Liver blob: {len(vertices)} vertices, {len(faces)} faces, "
        f"ridge={len(ridge)}, ligament={len(ligament)}"
    )
    return LabelledMesh(vertices, faces, labels)
