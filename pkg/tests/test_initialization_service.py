"""Tests for random, averaged and canonical pose initialisation."""
import numpy as np
import pytest

from config import Config
from models import LabelledMesh, RigidPose
from models.errors import EmptySet, MissingCanonicalPose
from services.camera_repository import camera_repository
from services.initialization_service import (
    anterior_rotation,
    average_poses,
    init_canonical_pose,
    init_random_pose,
    sample_axis_angles,
)
from services.mesh_service import icosphere


@pytest.fixture
def sphere() -> LabelledMesh:
    vertices, faces = icosphere(1)
    return LabelledMesh(vertices * 50.0, faces)


class TestRandomPose:
    def test_fixed_seed_gives_the_same_pose(self, liver, camera):
        first = init_random_pose(liver, camera, rng_seed=42)
        second = init_random_pose(liver, camera, rng_seed=42)
        assert first.allclose(second, atol=0.0)

    def test_different_seeds_differ(self, liver, camera):
        assert not init_random_pose(liver, camera, rng_seed=1).allclose(init_random_pose(liver, camera, rng_seed=2))

    def test_sampled_angles_stay_below_the_limit(self):
        rng = np.random.default_rng(0)
        angles = np.array([sample_axis_angles(rng, 90.0) for _ in range(1000)])
        assert np.all(np.abs(angles) < 90.0)

    def test_fixed_depth_puts_the_centroid_on_the_axis(self, sphere, camera):
        pose = init_random_pose(sphere, camera, rng_seed=3, depth_range=(500.0, 500.0))
        assert np.allclose(pose.t, [0.0, 0.0, 500.0], atol=1e-9)

    def test_centroid_of_an_offset_mesh_is_placed_on_the_axis(self, liver, camera):
        shifted = liver.with_vertices(liver.vertices + [30.0, -20.0, 10.0])
        pose = init_random_pose(shifted, camera, rng_seed=5, depth_range=(400.0, 400.0))
        assert np.allclose(pose.apply(shifted.vertices.mean(axis=0)), [0.0, 0.0, 400.0], atol=1e-9)
        assert np.allclose(pose.t, [0.0, 0.0, 400.0] - pose.R @ shifted.vertices.mean(axis=0), atol=1e-9)
        assert not np.allclose(pose.t, [0.0, 0.0, 400.0], atol=1.0)

    def test_depth_is_drawn_from_the_range(self, liver, camera):
        for seed in range(10):
            pose = init_random_pose(liver, camera, rng_seed=seed, depth_range=(300.0, 800.0))
            assert 300.0 <= pose.apply(liver.vertices.mean(axis=0))[2] <= 800.0

    def test_anterior_side_faces_the_camera_without_tilt(self, liver, camera):
        pose = init_random_pose(liver, camera, rng_seed=0, max_angle_deg=0.0, anterior=(0.0, 1.0, 0.0))
        assert np.allclose(pose.R @ [0.0, 1.0, 0.0], [0.0, 0.0, -1.0], atol=1e-12)


class TestAnteriorRotation:
    @pytest.mark.parametrize("anterior", [(1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, 0.0, -1.0), (1.0, 2.0, -3.0)])
    def test_maps_direction_to_the_camera(self, anterior):
        direction = np.asarray(anterior) / np.linalg.norm(anterior)
        R = anterior_rotation(anterior)
        assert np.allclose(R @ direction, [0.0, 0.0, -1.0], atol=1e-12)
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0)


class TestAveragePoses:
    def test_average_of_equal_poses(self):
        pose = RigidPose.from_rotvec([0.2, -0.4, 0.1], t=(3.0, 4.0, 500.0))
        assert average_poses([pose, pose]).allclose(pose, atol=1e-12)

    def test_opposite_turns_cancel(self):
        average = average_poses([RigidPose.from_euler("z", 10.0), RigidPose.from_euler("z", -10.0)])
        assert average.allclose(RigidPose.identity(), atol=1e-12)

    def test_translations_are_averaged(self):
        poses = [RigidPose(np.eye(3), [0.0, 0.0, 400.0]), RigidPose(np.eye(3), [10.0, 0.0, 600.0])]
        assert np.allclose(average_poses(poses).t, [5.0, 0.0, 500.0])

    def test_empty_list(self):
        with pytest.raises(EmptySet):
            average_poses([])


class TestCanonicalPose:
    def test_explicit_pose_wins(self):
        pose = RigidPose.from_rotvec([0.0, 0.5, 0.0], t=(0.0, 0.0, 300.0))
        assert init_canonical_pose(config_pose=pose) is pose

    def test_pose_is_read_from_path(self, tmp_path):
        pose = RigidPose.from_rotvec([0.3, 0.0, -0.2], t=(1.0, 2.0, 450.0))
        path = tmp_path / "canonical.json"
        camera_repository.save_pose(pose, path)
        assert init_canonical_pose(path=str(path)).allclose(pose, atol=1e-9)

    def test_missing_configuration(self, monkeypatch):
        monkeypatch.setattr(Config, "CANONICAL_POSE_PATH", None)
        with pytest.raises(MissingCanonicalPose):
            init_canonical_pose()
