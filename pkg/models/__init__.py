from .camera import CameraIntrinsics
from .pose import RigidPose
from .mesh import LabelledMesh, LandmarkSet3D, LANDMARK_CLASSES
from .landmark_map import LandmarkMap2D, SoftMask, MAP_CLASSES
from .registration import (
    Correspondence,
    OptimizerConfig,
    RegistrationProblem,
    RegistrationResult,
)
from .reports import Metric2DReport, Metric3DReport, RegistrationReport, ClassScores2D
from .case import CaseBundle, SyntheticCase

__all__ = [
    'CameraIntrinsics',
    'RigidPose',
    'LabelledMesh',
    'LandmarkSet3D',
    'LANDMARK_CLASSES',
    'LandmarkMap2D',
    'SoftMask',
    'MAP_CLASSES',
    'Correspondence',
    'OptimizerConfig',
    'RegistrationProblem',
    'RegistrationResult',
    'Metric2DReport',
    'Metric3DReport',
    'RegistrationReport',
    'ClassScores2D',
    'CaseBundle',
    'SyntheticCase',
]
