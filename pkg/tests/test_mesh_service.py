"""Tests for mesh normalisation, label dilation and surface regularisers."""
import numpy as np
import pytest

from models import LabelledMesh, LandmarkSet3D, RigidPose
from models.errors import ConnectivityMismatch, DegenerateExtent, IndexMismatch
from services.mesh_service import (
    dilate_labels_3d,
    edge_length_penalty,
    edge_length_statistics,
    icosphere,
    laplacian_smoothness,
    make_liver_blob,
    merge_view_landmarks,
    normalize_vertices,
)


def unit_cube() -> LabelledMesh:
    vertices = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)])
    faces = np.array([
        [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5], [0, 4, 5], [0, 5, 1],
        [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
    ])
    return LabelledMesh(vertices, faces)


def grid(n: int = 5, spacing: float = 1.0) -> LabelledMesh:
    """Flat n x n vertex grid in the z=0 plane, two triangles per cell."""
    xs, ys = np.meshgrid(np.arange(n) * spacing, np.arange(n) * spacing)
    vertices = np.stack([xs.reshape(-1), ys.reshape(-1), np.zeros(n * n)], axis=1)
    faces = []
    for r in range(n - 1):
        for c in range(n - 1):
            a, b, d, e = r * n + c, r * n + c + 1, (r + 1) * n + c, (r + 1) * n + c + 1
            faces.extend([[a, b, e], [a, e, d]])
    return LabelledMesh(vertices, np.array(faces))


def chain(spacing: float, count: int, labelled=(0,)) -> LabelledMesh:
    vertices = np.zeros((count, 3))
    vertices[:, 0] = np.arange(count) * spacing
    return LabelledMesh(vertices, np.zeros((0, 3)), LandmarkSet3D(ridge=labelled))


class TestNormalizeVertices:
    def test_unit_cube_is_centred_in_half_unit_box(self):
        normalised = normalize_vertices(unit_cube()).vertices
        assert np.allclose(normalised.mean(axis=0), 0.0)
        assert normalised.min() == pytest.approx(-0.5)
        assert normalised.max() == pytest.approx(0.5)

    def test_normalised_pair_is_a_fixed_point(self):
        mesh = LabelledMesh(np.array([[-0.5, -0.5, -0.5], [0.5, 0.5, 0.5]]), np.zeros((0, 3)))
        assert np.allclose(normalize_vertices(mesh).vertices, mesh.vertices)

    def test_planar_mesh_has_degenerate_extent(self):
        with pytest.raises(DegenerateExtent):
            normalize_vertices(grid())

    def test_labels_are_preserved(self):
        mesh = unit_cube().with_labels(LandmarkSet3D(ridge={1, 2}, ligament={5}))
        assert normalize_vertices(mesh).labels == mesh.labels


class TestDilateLabels3D:
    def test_neighbour_within_radius_is_labelled(self):
        dilated = dilate_labels_3d(chain(10.0, 2), "ridge", radius=20.0, passes=1)
        assert dilated.labels.ridge == {0, 1}

    def test_vertex_beyond_reach_stays_unlabelled(self):
        dilated = dilate_labels_3d(chain(50.0, 2), "ridge", radius=20.0, passes=2)
        assert dilated.labels.ridge == {0}

    def test_each_pass_grows_one_ring(self):
        dilated = dilate_labels_3d(chain(15.0, 6), "ridge", radius=20.0, passes=2)
        assert dilated.labels.ridge == {0, 1, 2}

    def test_other_class_is_untouched(self):
        mesh = chain(15.0, 4).with_labels(LandmarkSet3D(ridge={0}, ligament={3}))
        assert dilate_labels_3d(mesh, "ridge", radius=20.0, passes=1).labels.ligament == {3}

    def test_matches_brute_force_passes(self):
        rng = np.random.default_rng(4)
        vertices = rng.uniform(0.0, 100.0, size=(120, 3))
        mesh = LabelledMesh(vertices, np.zeros((0, 3)), LandmarkSet3D(ligament={0, 7}))
        expected = {0, 7}
        for _ in range(2):
            expected |= {
                j for j in range(len(vertices))
                for i in expected if np.linalg.norm(vertices[i] - vertices[j]) <= 20.0
            }
        assert dilate_labels_3d(mesh, "ligament", radius=20.0, passes=2).labels.ligament == expected

    def test_invalid_radius(self):
        with pytest.raises(ValueError):
            dilate_labels_3d(chain(1.0, 2), "ridge", radius=0.0, passes=1)


class TestMergeViewLandmarks:
    def test_single_view_is_unchanged(self):
        view = LandmarkSet3D(ridge={1, 2}, ligament={4})
        assert merge_view_landmarks([view]) == view

    def test_union_per_class(self):
        merged = merge_view_landmarks([LandmarkSet3D(ridge={1, 2}), LandmarkSet3D(ridge={2, 3}, ligament={9})])
        assert merged.ridge == {1, 2, 3}
        assert merged.ligament == {9}

    def test_empty_list(self):
        assert merge_view_landmarks([]).is_empty()

    def test_out_of_range_view_is_rejected(self):
        with pytest.raises(IndexMismatch):
            merge_view_landmarks([LandmarkSet3D(ridge={1}), LandmarkSet3D(ridge={12})], vertex_count=10)


class TestRegularisers:
    def test_flat_grid_is_perfectly_smooth(self):
        assert laplacian_smoothness(grid()) == pytest.approx(0.0, abs=1e-12)

    def test_tetrahedron_is_not_smooth(self):
        vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        mesh = LabelledMesh(vertices, np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]))
        expected = np.mean([
            np.sum((vertices[i] - vertices[[j for j in range(4) if j != i]].mean(axis=0)) ** 2)
            for i in range(4)
        ])
        assert laplacian_smoothness(mesh) == pytest.approx(expected)
        assert laplacian_smoothness(mesh) > 0

    def test_isolated_vertex_counts_as_zero(self):
        vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        faces = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
        closed = LabelledMesh(vertices, faces)
        with_isolated = LabelledMesh(np.vstack([vertices, [[5.0, 5.0, 5.0]]]), faces)
        assert laplacian_smoothness(with_isolated) == pytest.approx(0.8 * laplacian_smoothness(closed))

    def test_smoothness_is_rigid_invariant(self, liver):
        moved = liver.with_vertices(RigidPose.from_rotvec([0.3, -0.8, 0.2], t=(40.0, -7.0, 300.0)).apply(liver.vertices))
        assert laplacian_smoothness(moved) == pytest.approx(laplacian_smoothness(liver), rel=1e-9)

    def test_edge_penalty_against_itself(self, liver):
        assert edge_length_penalty(liver, liver) == 0.0

    def test_edge_penalty_is_rigid_invariant(self, liver):
        moved = liver.with_vertices(RigidPose.from_rotvec([1.0, 0.2, -0.4], t=(5.0, 5.0, 5.0)).apply(liver.vertices))
        assert edge_length_penalty(moved, liver) == pytest.approx(0.0, abs=1e-9)

    def test_doubling_unit_edges(self):
        vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, np.sqrt(3) / 2, 0.0]])
        triangle = LabelledMesh(vertices, np.array([[0, 1, 2]]))
        assert edge_length_penalty(triangle.with_vertices(2.0 * vertices), triangle) == pytest.approx(1.0)

    def test_edge_penalty_needs_shared_faces(self):
        with pytest.raises(ConnectivityMismatch):
            edge_length_penalty(grid(4), grid(5))

    def test_edge_statistics_of_equilateral_triangle(self):
        vertices = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [1.0, np.sqrt(3), 0.0]])
        mean, std = edge_length_statistics(LabelledMesh(vertices, np.array([[0, 1, 2]])))
        assert mean == pytest.approx(2.0)
        assert std == pytest.approx(0.0, abs=1e-12)


class TestSyntheticMeshes:
    def test_icosphere_is_closed(self):
        vertices, faces = icosphere(2)
        mesh = LabelledMesh(vertices, faces)
        assert np.allclose(np.linalg.norm(vertices, axis=1), 1.0)
        assert not mesh.boundary_vertices.any()
        assert len(mesh.edges) == 3 * len(faces) // 2

    def test_blob_carries_both_landmark_classes(self, liver):
        assert liver.labels.ridge
        assert liver.labels.ligament
        assert not liver.labels.ridge & liver.labels.ligament

    def test_blob_is_deterministic(self):
        a = make_liver_blob(subdivisions=2, seed=5)
        b = make_liver_blob(subdivisions=2, seed=5)
        assert np.array_equal(a.vertices, b.vertices)
        assert a.labels == b.labels
