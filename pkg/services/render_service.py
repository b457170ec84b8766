"""Software rasterization of labelled meshes.

Pixel (row i, column j) is sampled at its centre (u=j, v=i). Triangles are
rasterized as straight-edged triangles between the (distorted) projections
of their vertices, front and back faces alike; the nearest depth wins.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.spatial import cKDTree
from scipy.special import expit

from config import Config
from models import (
    CameraIntrinsics,
    LabelledMesh,
    LandmarkMap2D,
    LandmarkSet3D,
    LANDMARK_CLASSES,
    MAP_CLASSES,
    RigidPose,
    SoftMask,
)
from models.errors import EmptyProjection
from .geometry_service import in_image, project_camera_points, projection_jacobian

logger = logging.getLogger(__name__)

NEAR_PLANE_MM = 1e-3
MAX_CANDIDATES = 1_000_000
SOFT_BAND_SIGMAS = 16.0
CONTOUR_TOLERANCE_PX = 2.0
CONTOUR_SAMPLE_SPACING_PX = 1.0
NEAREST_SAMPLE_CANDIDATES = 16
PARALLEL_MIN_PIXELS = 1 << 16
VISIBILITY_DEPTH_TOLERANCE = 0.01

_EMPTY_SEGMENTS = np.zeros((0, 2), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Raster:
    """Depth and face-index buffers of one rendering."""
    intr: CameraIntrinsics
    cam: np.ndarray           # (V, 3) camera-frame vertices
    uv: np.ndarray            # (V, 2) projected vertices, NaN behind the camera
    depth: np.ndarray         # (H, W), inf where nothing is drawn
    face_index: np.ndarray    # (H, W), -1 where nothing is drawn
    front_facing: np.ndarray  # (F,)
    valid_faces: np.ndarray   # (F,) all three vertices in front of the near plane

    @property
    def mask(self) -> np.ndarray:
        return self.face_index >= 0

    def is_empty(self) -> bool:
        return not np.any(self.face_index >= 0)


@dataclass(frozen=True, eq=False)
class SoftSilhouette:
    """Soft occupancy plus the pose derivative of every pixel in the boundary band."""
    mask: SoftMask
    band_rows: np.ndarray
    band_cols: np.ndarray
    band_gradient: Optional[np.ndarray]   # (K, 6)
    degenerate: bool = False


def disk(radius: float) -> np.ndarray:
    r = int(math.ceil(radius))
    y, x = np.ogrid[-r:r + 1, -r:r + 1]
    return (x * x + y * y) <= radius * radius


# ── Rasterization ──────────────────────────────────────────────────────

def _edge(p0: np.ndarray, p1: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    return (p1[:, 0] - p0[:, 0]) * (py - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (px - p0[:, 0])


def _raster_chunk(tri, tri_z, area, col_min, row_min, ncols, counts):
    owner = np.repeat(np.arange(len(counts)), counts)
    offsets = np.cumsum(counts) - counts
    local = np.arange(int(counts.sum())) - offsets[owner]
    cols = col_min[owner] + local % ncols[owner]
    rows = row_min[owner] + local // ncols[owner]
    px = cols.astype(float)
    py = rows.astype(float)

    a, b, c = tri[owner, 0], tri[owner, 1], tri[owner, 2]
    w0 = _edge(b, c, px, py)
    w1 = _edge(c, a, px, py)
    w2 = _edge(a, b, px, py)
    signed_area = area[owner]
    orientation = np.sign(signed_area)
    inside = (w0 * orientation >= 0) & (w1 * orientation >= 0) & (w2 * orientation >= 0)

    l0 = w0[inside] / signed_area[inside]
    l1 = w1[inside] / signed_area[inside]
    l2 = w2[inside] / signed_area[inside]
    z = tri_z[owner[inside]]
    inv_depth = l0 / z[:, 0] + l1 / z[:, 1] + l2 / z[:, 2]
    return rows[inside], cols[inside], owner[inside], 1.0 / inv_depth


def _draw_faces(ids, tri, tri_z, width, height, depth, face_index, band=None):
    """Z-buffer the given faces into the flat `depth` / `face_index` buffers in place.

    `band` (first row, last row) restricts drawing to those image rows.
    """
    first_row, last_row = (0, height - 1) if band is None else band
    area = _edge(tri[:, 0], tri[:, 1], tri[:, 2, 0], tri[:, 2, 1])
    col_min = np.maximum(np.ceil(tri[..., 0].min(axis=1)), 0).astype(np.int64)
    col_max = np.minimum(np.floor(tri[..., 0].max(axis=1)), width - 1).astype(np.int64)
    row_min = np.maximum(np.ceil(tri[..., 1].min(axis=1)), first_row).astype(np.int64)
    row_max = np.minimum(np.floor(tri[..., 1].max(axis=1)), last_row).astype(np.int64)
    ncols = np.maximum(col_max - col_min + 1, 0)
    counts = ncols * np.maximum(row_max - row_min + 1, 0)
    drawable = (counts > 0) & (np.abs(area) > 1e-12)

    ids, tri, tri_z, area = ids[drawable], tri[drawable], tri_z[drawable], area[drawable]
    col_min, row_min, ncols, counts = col_min[drawable], row_min[drawable], ncols[drawable], counts[drawable]

    start = 0
    cumulative = np.cumsum(counts)
    while start < len(ids):
        budget = (cumulative[start - 1] if start else 0) + MAX_CANDIDATES
        end = max(int(np.searchsorted(cumulative, budget, side="right")), start + 1)
        chunk = slice(start, end)
        rows, cols, owner, z = _raster_chunk(
            tri[chunk], tri_z[chunk], area[chunk], col_min[chunk], row_min[chunk], ncols[chunk], counts[chunk],
        )
        start = end
        if not len(z):
            continue
        pixel = rows * width + cols
        face = ids[chunk][owner]
        order = np.lexsort((face, z, pixel))
        pixel, z, face = pixel[order], z[order], face[order]
        first = np.ones(len(pixel), dtype=bool)
        first[1:] = pixel[1:] != pixel[:-1]
        pixel, z, face = pixel[first], z[first], face[first]
        nearer = z < depth[pixel]
        depth[pixel[nearer]] = z[nearer]
        face_index[pixel[nearer]] = face[nearer]


def row_bands(height: int, threads: int) -> list[tuple[int, int]]:
    """Split rows 0..height-1 into at most `threads` contiguous inclusive bands."""
    edges = np.linspace(0, height, max(1, min(threads, height)) + 1).round().astype(np.int64)
    return [(int(lo), int(hi) - 1) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def rasterize(
    mesh: LabelledMesh,
    pose: RigidPose,
    intr: CameraIntrinsics,
    allow_empty: bool = False,
) -> Raster:
    """Z-buffer every face whose vertices all lie in front of the camera.

    Large images are drawn as disjoint row bands on `Config.RENDER_THREADS`
    threads; ties resolve to the lowest face index, so the buffers do not
    depend on the thread count. Raises EmptyProjection when nothing lands on
    a pixel centre, unless `allow_empty` is set.
    """
    cam = pose.apply(mesh.vertices)
    uv = project_camera_points(intr, cam)
    faces = mesh.faces
    height, width = intr.shape

    tri_cam = cam[faces]
    normals = np.cross(tri_cam[:, 1] - tri_cam[:, 0], tri_cam[:, 2] - tri_cam[:, 0])
    front_facing = np.einsum("ij,ij->i", normals, tri_cam[:, 0]) < 0
    valid = np.all(cam[:, 2][faces] > NEAR_PLANE_MM, axis=1) & np.all(np.isfinite(uv[faces]), axis=(1, 2))

    depth = np.full(height * width, np.inf)
    face_index = np.full(height * width, -1, dtype=np.int64)

    ids = np.nonzero(valid)[0]
    if len(ids):
        tri, tri_z = uv[faces[ids]], cam[:, 2][faces[ids]]
        threads = Config.RENDER_THREADS if height * width >= PARALLEL_MIN_PIXELS else 1
        bands = row_bands(height, threads)
        if len(bands) == 1:
            _draw_faces(ids, tri, tri_z, width, height, depth, face_index)
        else:
            with ThreadPoolExecutor(max_workers=len(bands)) as executor:
                futures = [
                    executor.submit(_draw_faces, ids, tri, tri_z, width, height, depth, face_index, band)
                    for band in bands
                ]
                for future in futures:
                    future.result()

    raster = Raster(
        intr=intr,
        cam=cam,
        uv=uv,
        depth=depth.reshape(height, width),
        face_index=face_index.reshape(height, width),
        front_facing=front_facing,
        valid_faces=valid,
    )
    if not allow_empty and raster.is_empty():
        raise EmptyProjection(f"no face projects inside the {width}x{height} image")
    return raster


def boundary_distance(mask: np.ndarray) -> np.ndarray:
    """Distance of every pixel to the nearest pixel on either side of a mask transition."""
    mask = np.asarray(mask, dtype=bool)
    inner = mask & ~ndimage.binary_erosion(mask, border_value=1)
    outer = ~mask & ndimage.binary_dilation(mask)
    boundary = inner | outer
    if not boundary.any():
        return np.full(mask.shape, np.inf)
    return ndimage.distance_transform_edt(~boundary)


def contour_segments(
    mesh: LabelledMesh,
    raster: Raster,
    tolerance: float = CONTOUR_TOLERANCE_PX,
    distance: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Vertex pairs (S, 2) of mesh edges on the projected occluding contour.

    Candidates are edges between a front- and a back-facing face, plus open
    boundary edges; only those lying on the rendered mask boundary (or
    projecting outside the image) are kept. `distance` is the mask's
    `boundary_distance` when the caller already has it.
    """
    if not len(mesh.edges):
        return _EMPTY_SEGMENTS
    first, second = mesh.edge_faces[:, 0], mesh.edge_faces[:, 1]
    paired = second >= 0
    other = np.maximum(second, 0)
    valid_first = raster.valid_faces[first]
    valid_second = paired & raster.valid_faces[other]
    folds = valid_first & valid_second & (raster.front_facing[first] != raster.front_facing[other])
    open_edges = ~paired & valid_first
    candidates = mesh.edges[folds | open_edges]
    if not len(candidates):
        return _EMPTY_SEGMENTS

    midpoints = 0.5 * (raster.uv[candidates[:, 0]] + raster.uv[candidates[:, 1]])
    visible = in_image(raster.intr, midpoints)
    keep = ~visible
    if visible.any():
        if distance is None:
            distance = boundary_distance(raster.mask)
        cols = np.floor(midpoints[visible, 0] + 0.5).astype(np.int64)
        rows = np.floor(midpoints[visible, 1] + 0.5).astype(np.int64)
        keep[visible] = distance[rows, cols] <= tolerance
    return candidates[keep]


def _closest_among(points, a, ab, length2, candidates=None):
    """Exact closest point over candidate segments per point; all segments when `candidates` is None."""
    distance = np.empty(len(points))
    segment = np.empty(len(points), dtype=np.int64)
    t_best = np.empty(len(points))
    width = len(a) if candidates is None else candidates.shape[1]
    chunk = max(1, 500_000 // max(1, width))
    for start in range(0, len(points), chunk):
        stop = min(start + chunk, len(points))
        p = points[start:stop]
        if candidates is None:
            idx = np.broadcast_to(np.arange(len(a)), (stop - start, len(a)))
        else:
            idx = candidates[start:stop]
        offset = p[:, None, :] - a[idx]
        t = np.clip(np.sum(offset * ab[idx], axis=2) / length2[idx], 0.0, 1.0)
        residual = offset - t[..., None] * ab[idx]
        dist2 = np.sum(residual * residual, axis=2)
        best = np.argmin(dist2, axis=1)
        rows = np.arange(stop - start)
        distance[start:stop] = np.sqrt(dist2[rows, best])
        segment[start:stop] = idx[rows, best]
        t_best[start:stop] = t[rows, best]
    return distance, segment, t_best


def contour_samples(
    a: np.ndarray,
    b: np.ndarray,
    spacing: float = CONTOUR_SAMPLE_SPACING_PX,
    lower: Optional[np.ndarray] = None,
    upper: Optional[np.ndarray] = None,
):
    """Points along every segment, at most `spacing` apart, ends included.

    With a box (`lower`, `upper`) only the part of each segment inside it is
    sampled. Returns (points (K, 2), owning segment (K,)).
    """
    ab = b - a
    t_enter = np.zeros(len(a))
    t_exit = np.ones(len(a))
    if lower is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            for axis in range(2):
                d = ab[:, axis]
                t1 = (lower[axis] - a[:, axis]) / d
                t2 = (upper[axis] - a[:, axis]) / d
                flat = d == 0
                inside = (a[:, axis] >= lower[axis]) & (a[:, axis] <= upper[axis])
                t_enter = np.maximum(t_enter, np.where(flat, np.where(inside, 0.0, np.inf), np.minimum(t1, t2)))
                t_exit = np.minimum(t_exit, np.where(flat, np.where(inside, 1.0, -np.inf), np.maximum(t1, t2)))
    hit = np.nonzero(t_enter <= t_exit)[0]
    t_enter, t_exit = t_enter[hit], t_exit[hit]

    length = np.linalg.norm(ab[hit], axis=1) * (t_exit - t_enter)
    counts = np.ceil(length / spacing).astype(np.int64) + 1
    owner = np.repeat(hit, counts)
    local = np.repeat(np.arange(len(hit)), counts)
    offsets = np.cumsum(counts) - counts
    steps = np.maximum(counts - 1, 1)
    fraction = (np.arange(int(counts.sum())) - offsets[local]) / steps[local]
    t = t_enter[local] + fraction * (t_exit - t_enter)[local]
    return a[owner] + t[:, None] * ab[owner], owner


def nearest_segments(points: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Closest point on any segment (a_k, b_k) for every query point.

    Segments are sampled every CONTOUR_SAMPLE_SPACING_PX inside a box padded
    around the queries and indexed in a KD-tree; the owners of a point's
    nearest samples are its candidate segments. The nearest segment owns a
    sample within distance + spacing/2 of the point, so when the farthest
    retrieved sample lies beyond that radius the candidates hold the exact
    answer. Other points are searched over every segment.

    Returns (distance, segment index, segment parameter t, closest point).
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    ab = b - a
    length2 = np.maximum(np.sum(ab * ab, axis=1), 1e-300)
    if not len(points):
        return np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros((0, 2))

    lower, upper = points.min(axis=0), points.max(axis=0)
    pad = max(float(np.linalg.norm(upper - lower)), 1.0)
    samples, owner = contour_samples(a, b, lower=lower - pad, upper=upper + pad)
    if not len(samples):
        distance, segment, t_best = _closest_among(points, a, ab, length2)
    else:
        k = min(NEAREST_SAMPLE_CANDIDATES, len(samples))
        reach, nearest = cKDTree(samples).query(points, k=k, workers=Config.RENDER_THREADS)
        reach = np.asarray(reach, dtype=float).reshape(len(points), k)
        nearest = np.asarray(nearest, dtype=np.int64).reshape(len(points), k)
        distance, segment, t_best = _closest_among(points, a, ab, length2, owner[nearest])

        covered = reach[:, -1] > distance + 0.5 * CONTOUR_SAMPLE_SPACING_PX
        if k == len(samples):
            covered[:] = True
        unsure = np.nonzero(~covered | (distance > pad))[0]
        if len(unsure):
            distance[unsure], segment[unsure], t_best[unsure] = _closest_among(points[unsure], a, ab, length2)
    closest = a[segment] + t_best[:, None] * ab[segment]
    return distance, segment, t_best, closest


# ── Silhouettes ────────────────────────────────────────────────────────

def soft_silhouette(
    mesh: LabelledMesh,
    pose: RigidPose,
    intr: CameraIntrinsics,
    softness: float,
    with_gradient: bool = False,
    raster: Optional[Raster] = None,
) -> SoftSilhouette:
    """sigmoid(signed distance / softness) occupancy at `intr` resolution.

    The signed distance is measured to the projected occluding contour,
    positive inside the rasterized mask. Pixels farther than the boundary
    band keep their hard value.
    """
    raster = raster or rasterize(mesh, pose, intr)
    hard = raster.mask
    empty = np.zeros(0, dtype=np.int64)
    if softness <= 0:
        return SoftSilhouette(SoftMask(hard.astype(float)), empty, empty, np.zeros((0, 6)) if with_gradient else None)

    distance = boundary_distance(hard)
    segments = contour_segments(mesh, raster, distance=distance)
    if not len(segments):
        logger.debug("No contour segments on the mask boundary; returning the hard mask")
        return SoftSilhouette(SoftMask(hard.astype(float)), empty, empty, np.zeros((0, 6)) if with_gradient else None, True)

    band = SOFT_BAND_SIGMAS * softness + 2.0
    rows, cols = np.nonzero(distance <= band)
    points = np.stack([cols, rows], axis=1).astype(float)
    a = raster.uv[segments[:, 0]]
    b = raster.uv[segments[:, 1]]
    offset, segment, t, closest = nearest_segments(points, a, b)
    sign = np.where(hard[rows, cols], 1.0, -1.0)
    values = expit(sign * offset / softness)

    image = hard.astype(float)
    image[rows, cols] = values

    gradient = None
    degenerate = False
    if with_gradient:
        normal = points - closest
        norm = np.linalg.norm(normal, axis=1)
        on_contour = norm < 1e-9
        degenerate = bool(np.any(on_contour))
        normal = normal / np.where(on_contour, 1.0, norm)[:, None]
        normal[on_contour] = 0.0

        used, local = np.unique(segment, return_inverse=True)
        jac_a = projection_jacobian(intr, pose, mesh.vertices[segments[used, 0]])
        jac_b = projection_jacobian(intr, pose, mesh.vertices[segments[used, 1]])
        local = local.reshape(-1)
        jac = (1.0 - t)[:, None, None] * jac_a[local] + t[:, None, None] * jac_b[local]
        d_distance = -np.einsum("ki,kij->kj", normal, jac)
        gradient = (values * (1.0 - values) * sign / softness)[:, None] * d_distance

    return SoftSilhouette(SoftMask(image), rows, cols, gradient, degenerate)


def render_silhouette(
    mesh: LabelledMesh,
    pose: RigidPose,
    intr: CameraIntrinsics,
    scale: float = 1.0,
    softness: float = None,
) -> SoftMask:
    """Occupancy mask at (width·scale, height·scale); softness 0 gives a hard mask."""
    softness = Config.SOFTNESS_SIGMA if softness is None else softness
    return soft_silhouette(mesh, pose, intr.scaled(scale), softness).mask


def extract_view_silhouette(mask, dilation: int = 1) -> LandmarkMap2D:
    """Upper occluding boundary: background (or the image edge) above, liver below, per column."""
    hard = mask.hard() if isinstance(mask, SoftMask) else np.asarray(mask, dtype=bool)
    top = hard.copy()
    top[1:] &= ~hard[:-1]
    if dilation > 0 and top.any():
        top = ndimage.binary_dilation(top, structure=disk(dilation))
    return LandmarkMap2D.from_channels(hard.shape, silhouette=top)


def upper_contour_samples(
    mesh: LabelledMesh,
    raster: Raster,
    segments: Optional[np.ndarray] = None,
    spacing: float = 1.0,
    tolerance: float = 1.5,
):
    """Points at most `spacing` px apart along the contour's upper silhouette.

    Returns (points (K, 2), vertex pairs (K, 2), t (K,)) so callers can
    differentiate each sample as (1 − t)·a + t·b.
    """
    segments = contour_segments(mesh, raster) if segments is None else segments
    silhouette = extract_view_silhouette(raster.mask, dilation=0).channel("silhouette")
    if not len(segments) or not silhouette.any():
        return np.zeros((0, 2)), _EMPTY_SEGMENTS, np.zeros(0)

    a = raster.uv[segments[:, 0]]
    b = raster.uv[segments[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    counts = np.maximum(1, np.ceil(length / spacing)).astype(np.int64)
    owner = np.repeat(np.arange(len(segments)), counts)
    offsets = np.cumsum(counts) - counts
    t = (np.arange(int(counts.sum())) - offsets[owner] + 0.5) / counts[owner]
    points = a[owner] + t[:, None] * (b - a)[owner]

    keep = in_image(raster.intr, points)
    distance = ndimage.distance_transform_edt(~silhouette)
    cols = np.floor(points[keep, 0] + 0.5).astype(np.int64)
    rows = np.floor(points[keep, 1] + 0.5).astype(np.int64)
    keep[keep] = distance[rows, cols] <= tolerance
    return points[keep], segments[owner[keep]], t[keep]


# ── Landmarks and visibility ───────────────────────────────────────────

def visible_vertices(
    mesh: LabelledMesh,
    pose: RigidPose,
    intr: CameraIntrinsics,
    raster: Optional[Raster] = None,
    indices=None,
) -> np.ndarray:
    """Sorted indices of vertices in front of the camera, inside the image and unoccluded.

    A vertex passes the depth test when the face drawn at its pixel is
    incident to it, or when it is no deeper than the buffer (1% tolerance).
    """
    raster = raster or rasterize(mesh, pose, intr, allow_empty=True)
    candidates = (
        np.arange(mesh.vertex_count) if indices is None
        else np.array(sorted(int(i) for i in indices), dtype=np.int64)
    )
    if not len(candidates):
        return candidates
    z = raster.cam[candidates, 2]
    uv = raster.uv[candidates]
    ok = (z > NEAR_PLANE_MM) & in_image(intr, uv)
    candidates, z, uv = candidates[ok], z[ok], uv[ok]

    cols = np.floor(uv[:, 0] + 0.5).astype(np.int64)
    rows = np.floor(uv[:, 1] + 0.5).astype(np.int64)
    buffer_depth = raster.depth[rows, cols]
    buffer_face = raster.face_index[rows, cols]
    incident = (buffer_face >= 0) & np.any(
        mesh.faces[np.maximum(buffer_face, 0)] == candidates[:, None], axis=1
    )
    unoccluded = ~np.isfinite(buffer_depth) | (z <= buffer_depth * (1.0 + VISIBILITY_DEPTH_TOLERANCE))
    return candidates[incident | unoccluded]


def splat_points(uv: np.ndarray, shape: tuple[int, int], radius: float) -> np.ndarray:
    """Boolean image with a disc of `radius` px around each rounded point."""
    height, width = shape
    image = np.zeros(shape, dtype=bool)
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    if not len(uv):
        return image
    footprint = disk(max(radius, 0.0))
    dy, dx = np.nonzero(footprint)
    r = (footprint.shape[0] - 1) // 2
    cols = np.floor(uv[:, 0] + 0.5).astype(np.int64)[:, None] + (dx - r)[None, :]
    rows = np.floor(uv[:, 1] + 0.5).astype(np.int64)[:, None] + (dy - r)[None, :]
    inside = (cols >= 0) & (cols < width) & (rows >= 0) & (rows < height)
    image[rows[inside], cols[inside]] = True
    return image


def render_landmarks(
    mesh: LabelledMesh,
    landmarks: LandmarkSet3D,
    pose: RigidPose,
    intr: CameraIntrinsics,
    point_radius: float = 2.0,
    raster: Optional[Raster] = None,
) -> LandmarkMap2D:
    raster = raster or rasterize(mesh, pose, intr, allow_empty=True)
    channels = {}
    drawn = 0
    for landmark_class in LANDMARK_CLASSES:
        visible = visible_vertices(mesh, pose, intr, raster=raster, indices=landmarks.indices(landmark_class))
        channels[landmark_class] = splat_points(raster.uv[visible], intr.shape, point_radius)
        drawn += len(visible)
    if not drawn:
        raise EmptyProjection("no landmark vertex is visible")
    return LandmarkMap2D.from_channels(intr.shape, **channels)


# ── Image filters and label-map operators ──────────────────────────────

def to_grayscale(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.ndim == 3:
        return image[..., :3] @ np.array([0.299, 0.587, 0.114])
    return image


def contour_enhance(image: np.ndarray, radius: float = None) -> np.ndarray:
    """High-pass the image in the frequency domain; result normalised to [0, 1]."""
    radius = Config.CONTOUR_CUTOFF_BINS if radius is None else radius
    gray = to_grayscale(image)
    if gray.size == 0:
        raise ValueError("contour_enhance needs a non-empty image")

    spectrum = np.fft.fftshift(np.fft.fft2(gray))
    height, width = gray.shape
    fy = np.arange(height) - height // 2
    fx = np.arange(width) - width // 2
    spectrum[(fy[:, None] ** 2 + fx[None, :] ** 2) <= radius * radius] = 0.0
    enhanced = np.abs(np.fft.ifft2(np.fft.ifftshift(spectrum)))

    peak = enhanced.max()
    if peak <= 1e-9 * max(1.0, float(np.abs(gray).max())):
        return np.zeros_like(gray)
    return enhanced / peak


def dilate_labels_2d(
    label_map: LandmarkMap2D,
    radius: float,
    classes: Sequence[str] = MAP_CLASSES,
) -> LandmarkMap2D:
    """Grow the chosen classes by a Euclidean disc of `radius` px."""
    if radius <= 0:
        return label_map
    structure = disk(radius)
    result = label_map
    for name in classes:
        channel = label_map.channel(name)
        if channel.any():
            result = result.with_channel(name, ndimage.binary_dilation(channel, structure=structure))
    return result


def union_maps(maps: Sequence[LandmarkMap2D]) -> LandmarkMap2D:
    """Pixel-wise union of several predictions of the same image."""
    if not maps:
        raise ValueError("union_maps needs at least one map")
    result = maps[0]
    for other in maps[1:]:
        result = result.union(other)
    return result


def resize_map(label_map: LandmarkMap2D, shape: tuple[int, int]) -> LandmarkMap2D:
    """Box-filter each class to `shape`; any coverage marks the pixel."""
    if label_map.shape == tuple(shape):
        return label_map
    height, width = shape
    channels = {}
    for name in MAP_CLASSES:
        channel = Image.fromarray(label_map.channel(name).astype(np.uint8) * 255)
        resized = channel.resize((width, height), Image.Resampling.BOX)
        channels[name] = np.asarray(resized) > 0
    return LandmarkMap2D.from_channels(shape, **channels)


def resize_mask(mask: SoftMask, shape: tuple[int, int]) -> SoftMask:
    if mask.shape == tuple(shape):
        return mask
    height, width = shape
    image = Image.fromarray(mask.values.astype(np.float32))
    resized = np.asarray(image.resize((width, height), Image.Resampling.BOX), dtype=float)
    return SoftMask(np.clip(resized, 0.0, 1.0))
