import os
from dotenv import load_dotenv
from version import __version__

# Load environment variables from .env file
load_dotenv()


def _env_int(name: str, default: int) -> int:
    try:
        return int(os.getenv(name, default))
    except ValueError:
        return default


def _env_float(name: str, default: float) -> float:
    try:
        return float(os.getenv(name, default))
    except ValueError:
        return default


class Config:
    """Configuration class for toolkit defaults."""

    # Reproducibility
    SEED = _env_int('P2ILF_SEED', 0)

    # Runtime
    DEBUG_MODE = os.getenv('DEBUG_MODE', 'False').lower() == 'true'
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'DEBUG' if DEBUG_MODE else 'INFO').upper()
    JOBS = _env_int('REGISTRATION_JOBS', 1)
    RENDER_THREADS = _env_int('RENDER_THREADS', min(8, os.cpu_count() or 1))
    VERSION = os.getenv('TOOLKIT_VERSION', __version__)

    # Rendering
    RENDER_SCALE = _env_float('RENDER_SCALE', 0.2)
    SOFTNESS_SIGMA = _env_float('SOFTNESS_SIGMA', 1.0)

    # Geometry
    UNDISTORT_MAX_ITERATIONS = _env_int('UNDISTORT_MAX_ITERATIONS', 50)

    # Label processing
    DILATION_RADIUS_MM = _env_float('DILATION_RADIUS_MM', 20.0)
    DILATION_PASSES = _env_int('DILATION_PASSES', 2)
    CONTOUR_CUTOFF_BINS = _env_float('CONTOUR_CUTOFF_BINS', 8.0)
    POLYLINE_WIDTH_PX = _env_int('POLYLINE_WIDTH_PX', 3)

    # Evaluation
    SYMMETRIC_D_MAX = _env_float('SYMMETRIC_D_MAX', 5.0)

    # Silhouette method initial pose
    CANONICAL_POSE_PATH = os.getenv('CANONICAL_POSE_PATH', '')

    @classmethod
    def validate_config(cls):
        """Validate that every configured value is usable."""
        checks = [
            ('P2ILF_SEED', cls.SEED >= 0),
            ('REGISTRATION_JOBS', cls.JOBS >= 1),
            ('RENDER_THREADS', cls.RENDER_THREADS >= 1),
            ('RENDER_SCALE', 0 < cls.RENDER_SCALE <= 1),
            ('SOFTNESS_SIGMA', cls.SOFTNESS_SIGMA >= 0),
            ('UNDISTORT_MAX_ITERATIONS', cls.UNDISTORT_MAX_ITERATIONS >= 1),
            ('DILATION_RADIUS_MM', cls.DILATION_RADIUS_MM > 0),
            ('DILATION_PASSES', cls.DILATION_PASSES >= 1),
            ('CONTOUR_CUTOFF_BINS', cls.CONTOUR_CUTOFF_BINS >= 0),
            ('POLYLINE_WIDTH_PX', cls.POLYLINE_WIDTH_PX >= 1),
            ('SYMMETRIC_D_MAX', cls.SYMMETRIC_D_MAX > 0),
        ]

        invalid_vars = [var_name for var_name, ok in checks if not ok]

        if cls.CANONICAL_POSE_PATH and not os.path.isfile(cls.CANONICAL_POSE_PATH):
            invalid_vars.append('CANONICAL_POSE_PATH')

        if invalid_vars:
            raise ValueError(f"Invalid configuration values: {', '.join(invalid_vars)}")

        return True
