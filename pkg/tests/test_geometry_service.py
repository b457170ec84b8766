"""Tests for pose algebra, projection and lens distortion."""
import cv2
import numpy as np
import pytest

from models import CameraIntrinsics, RigidPose
from models.errors import NoConvergence, NonPositiveDepth
from services.geometry_service import (
    apply_pose,
    compose,
    distort_pixels,
    in_image,
    inverse,
    opencv_distortion,
    project,
    projection_jacobian,
    undistort,
)


@pytest.fixture
def hd_camera() -> CameraIntrinsics:
    return CameraIntrinsics(fx=1000.0, fy=1000.0, cx=960.0, cy=540.0, width=1920, height=1080)


def rot_z(degrees: float) -> RigidPose:
    return RigidPose.from_euler("z", degrees)


class TestPoseAlgebra:
    def test_identity_leaves_points_unchanged(self):
        assert np.allclose(apply_pose(RigidPose.identity(), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])

    def test_pure_translation(self):
        pose = RigidPose(np.eye(3), [0.0, 0.0, 500.0])
        assert np.allclose(apply_pose(pose, [0.0, 0.0, 0.0]), [0.0, 0.0, 500.0])

    def test_quarter_turn_about_z(self):
        assert np.allclose(apply_pose(rot_z(90.0), [1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)

    def test_compose_with_identity(self):
        pose = RigidPose.from_rotvec([0.1, -0.2, 0.3], t=(5.0, -2.0, 400.0))
        assert compose(RigidPose.identity(), pose).allclose(pose)

    def test_compose_with_inverse_is_identity(self):
        pose = RigidPose.from_rotvec([0.4, 0.1, -0.7], t=(12.0, 3.0, 250.0))
        assert compose(pose, inverse(pose)).allclose(RigidPose.identity(), atol=1e-9)

    def test_rotation_angles_add(self):
        assert compose(rot_z(30.0), rot_z(60.0)).allclose(rot_z(90.0), atol=1e-12)

    def test_compose_applies_right_operand_first(self):
        a = RigidPose.from_rotvec([0.0, 0.3, 0.0], t=(1.0, 0.0, 0.0))
        b = RigidPose.from_rotvec([0.2, 0.0, 0.0], t=(0.0, 2.0, 0.0))
        p = np.array([3.0, -1.0, 2.0])
        assert np.allclose(compose(a, b).apply(p), a.apply(b.apply(p)))

    def test_retract_rotates_then_translates(self):
        pose = RigidPose(np.eye(3), [0.0, 0.0, 100.0])
        moved = pose.retract([0.0, 0.0, np.pi / 2, 1.0, 2.0, 3.0])
        assert np.allclose(moved.apply([1.0, 0.0, 0.0]), [1.0, 3.0, 103.0], atol=1e-12)


class TestProjection:
    def test_on_axis_point_hits_principal_point(self, hd_camera):
        assert np.allclose(project(hd_camera, RigidPose.identity(), [0.0, 0.0, 500.0]), [960.0, 540.0])

    def test_lateral_offset(self, hd_camera):
        assert np.allclose(project(hd_camera, RigidPose.identity(), [50.0, 0.0, 500.0]), [1060.0, 540.0])

    def test_point_behind_camera(self, hd_camera):
        with pytest.raises(NonPositiveDepth):
            project(hd_camera, RigidPose.identity(), [0.0, 0.0, -10.0])

    def test_batched_points_keep_their_order(self, hd_camera):
        points = np.array([[0.0, 0.0, 500.0], [50.0, 0.0, 500.0], [0.0, -50.0, 1000.0]])
        uv = project(hd_camera, RigidPose.identity(), points)
        assert np.allclose(uv, [[960.0, 540.0], [1060.0, 540.0], [960.0, 490.0]])

    def test_jacobian_matches_finite_differences(self, distorted_camera):
        pose = RigidPose.from_rotvec([0.1, -0.05, 0.2], t=(10.0, -5.0, 400.0))
        points = np.array([[20.0, 10.0, 5.0], [-30.0, 15.0, -10.0], [0.0, -25.0, 20.0]])
        jac = projection_jacobian(distorted_camera, pose, points)

        step = 1e-6
        numeric = np.zeros_like(jac)
        for k in range(6):
            offset = np.zeros(6)
            offset[k] = step
            plus = project(distorted_camera, pose.retract(offset), points)
            minus = project(distorted_camera, pose.retract(-offset), points)
            numeric[:, :, k] = (plus - minus) / (2.0 * step)
        assert np.allclose(jac, numeric, rtol=1e-5, atol=1e-4)

    def test_in_image_uses_pixel_centres(self, camera):
        uv = np.array([[-0.5, 0.0], [-0.51, 0.0], [159.49, 119.49], [159.5, 0.0], [np.nan, 3.0]])
        assert in_image(camera, uv).tolist() == [True, False, True, False, False]


class TestDistortion:
    def test_no_distortion_is_identity(self, hd_camera):
        u = np.array([[10.0, 20.0], [1500.0, 900.0]])
        assert np.array_equal(undistort(hd_camera, u), u)

    def test_undistort_inverts_distort(self):
        intr = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=960.0, cy=540.0, width=1920, height=1080, k1=-0.1)
        rng = np.random.default_rng(0)
        ideal = rng.uniform([0.0, 0.0], [1919.0, 1079.0], size=(200, 2))
        assert np.allclose(undistort(intr, distort_pixels(intr, ideal)), ideal, atol=1e-6)

    def test_distortion_agrees_with_opencv_projection(self):
        intr = CameraIntrinsics(
            fx=200.0, fy=210.0, cx=79.5, cy=59.5, width=160, height=120,
            k1=-0.1, k2=0.01, k3=0.002, p1=0.001, p2=-0.0005,
        )
        pose = RigidPose.from_rotvec([0.1, -0.2, 0.05], t=(5.0, -3.0, 300.0))
        points = np.random.default_rng(4).uniform(-60.0, 60.0, size=(30, 3))
        rvec, _ = cv2.Rodrigues(np.asarray(pose.R, dtype=float))
        expected, _ = cv2.projectPoints(points, rvec, np.asarray(pose.t, dtype=float).reshape(3, 1), intr.matrix, opencv_distortion(intr))
        assert np.allclose(project(intr, pose, points), expected.reshape(-1, 2), atol=1e-8)

    def test_full_model_round_trip(self, distorted_camera):
        rows, cols = np.mgrid[0:120:7, 0:160:9]
        ideal = np.stack([cols.reshape(-1), rows.reshape(-1)], axis=1).astype(float)
        assert np.allclose(undistort(distorted_camera, distort_pixels(distorted_camera, ideal)), ideal, atol=1e-6)

    def test_single_point_keeps_its_shape(self, distorted_camera):
        point = np.array([100.0, 30.0])
        assert undistort(distorted_camera, distort_pixels(distorted_camera, point)).shape == (2,)

    def test_non_invertible_region_is_reported(self):
        intr = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=960.0, cy=540.0, width=1920, height=1080, k1=-0.5)
        with pytest.raises(NoConvergence):
            undistort(intr, np.array([[2960.0, 540.0]]))

    def test_non_finite_input_is_rejected(self, distorted_camera):
        with pytest.raises(ValueError):
            undistort(distorted_camera, np.array([[np.nan, 1.0]]))
