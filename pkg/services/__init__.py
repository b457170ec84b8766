from .camera_repository import camera_repository
from .mesh_repository import mesh_repository
from .landmark_repository import landmark_repository
from .case_repository import case_repository
from .failure_log_service import report_failure
from .registration_service import registration_service
from .evaluation_service import evaluation_service
from .synthetic_case_service import synth_case
from .overlay_service import render_overlay

__all__ = [
    'camera_repository',
    'mesh_repository',
    'landmark_repository',
    'case_repository',
    'report_failure',
    'registration_service',
    'evaluation_service',
    'synth_case',
    'render_overlay',
]
