"""Shared fixtures: a small camera, a synthetic liver blob and a rendered case."""
import numpy as np
import pytest

from models import CameraIntrinsics, LabelledMesh, RigidPose
from services.mesh_service import make_liver_blob
from services.synthetic_case_service import synth_case


@pytest.fixture
def camera() -> CameraIntrinsics:
    """160x120 pinhole camera, principal point at the image centre."""
    return CameraIntrinsics(fx=200.0, fy=200.0, cx=79.5, cy=59.5, width=160, height=120)


@pytest.fixture
def distorted_camera() -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=200.0, fy=200.0, cx=79.5, cy=59.5, width=160, height=120,
        k1=-0.1, k2=0.01, p1=0.001, p2=-0.0005,
    )


@pytest.fixture(scope="session")
def liver() -> LabelledMesh:
    return make_liver_blob(subdivisions=3, seed=0)


@pytest.fixture
def facing_pose() -> RigidPose:
    """Anterior side (+z) toward the camera, 600 mm away."""
    return RigidPose.from_euler("x", 180.0, t=(0.0, 0.0, 600.0))


@pytest.fixture
def synthetic(liver, camera, tmp_path):
    return synth_case(liver, camera, seed=3, out_dir=tmp_path / "case", case_id="4_7")


@pytest.fixture
def triangle() -> LabelledMesh:
    """Triangle in the plane z=0, 80 mm across, facing -z."""
    size = 40.0
    vertices = np.array([[-size, -size, 0.0], [size, -size, 0.0], [0.0, size, 0.0]])
    return LabelledMesh(vertices, np.array([[0, 1, 2]]))
