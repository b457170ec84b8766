from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from config import Config
from .camera import CameraIntrinsics
from .errors import DimensionMismatch
from .landmark_map import LandmarkMap2D, SoftMask
from .mesh import LabelledMesh, LandmarkSet3D
from .pose import RigidPose

METHODS = ("pnp", "pnp-ransac", "silhouette", "landmark-dr", "chamfer-dr")


@dataclass(frozen=True)
class Correspondence:
    """A model point (mm) paired with an undistorted image point (px)."""
    p3: tuple
    p2: tuple

    def __post_init__(self):
        p3 = tuple(float(v) for v in self.p3)
        p2 = tuple(float(v) for v in self.p2)
        if len(p3) != 3 or len(p2) != 2:
            raise ValueError("Correspondence needs a 3D and a 2D point")
        if not all(np.isfinite(p3 + p2)):
            raise ValueError("Correspondence coordinates must be finite")
        object.__setattr__(self, "p3", p3)
        object.__setattr__(self, "p2", p2)


def correspondence_arrays(corrs) -> tuple[np.ndarray, np.ndarray]:
    """Stack correspondences into (N, 3) and (N, 2) arrays."""
    corrs = list(corrs)
    if not corrs:
        return np.zeros((0, 3)), np.zeros((0, 2))
    return (
        np.array([c.p3 for c in corrs], dtype=float),
        np.array([c.p2 for c in corrs], dtype=float),
    )


@dataclass(frozen=True, eq=False)
class RegistrationProblem:
    mesh: LabelledMesh
    landmarks3d: LandmarkSet3D
    target2d: LandmarkMap2D
    intr: CameraIntrinsics
    silhouette_target: Optional[SoftMask] = None

    def __post_init__(self):
        if self.target2d.shape != self.intr.shape:
            raise DimensionMismatch(
                f"landmark map is {self.target2d.width}x{self.target2d.height} "
                f"but camera is {self.intr.width}x{self.intr.height}"
            )
        if self.silhouette_target is not None and self.silhouette_target.shape != self.intr.shape:
            raise DimensionMismatch(
                f"silhouette mask is {self.silhouette_target.width}x{self.silhouette_target.height} "
                f"but camera is {self.intr.width}x{self.intr.height}"
            )
        self.landmarks3d.validate(self.mesh.vertex_count)


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    pose: RigidPose
    final_loss: float
    loss_trace: tuple = ()
    restart_index: int = 0
    converged: bool = False
    seed: int = 0
    restart_results: tuple = ()

    def __post_init__(self):
        trace = tuple(float(v) for v in self.loss_trace) or (float(self.final_loss),)
        object.__setattr__(self, "loss_trace", trace)
        object.__setattr__(self, "final_loss", trace[-1])

    def with_restarts(self, results) -> "RegistrationResult":
        return replace(self, restart_results=tuple(results))

    def trace_rows(self) -> list[tuple[int, int, float]]:
        """(restart, iteration, loss) rows for every restart that ran."""
        results = self.restart_results or (self,)
        return [
            (r.restart_index, i, loss)
            for r in sorted(results, key=lambda r: r.restart_index)
            for i, loss in enumerate(r.loss_trace)
        ]


def _default_weights() -> dict:
    return {"ligament": 5.0, "ridge": 1.0, "silhouette": 0.5}


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings shared by the render-and-compare optimizers."""
    iterations: int = 150
    rotation_step: float = 0.02      # rad
    translation_step: float = 5.0    # mm
    final_step_fraction: float = 0.1
    max_halvings: int = 4
    weights: dict = field(default_factory=_default_weights)
    restarts: int = 30
    render_scale: float = field(default_factory=lambda: Config.RENDER_SCALE)
    softness: float = field(default_factory=lambda: Config.SOFTNESS_SIGMA)
    sigma_start: float = 4.0         # render-resolution px
    sigma_end: float = 1.0
    silhouette_dilation: int = 1
    pixel_fraction: float = 1.0
    smooth_l1_beta: float = 1.0
    chamfer_weight: float = 1.0
    chamfer_samples: int = 2048
    phase2_iterations: int = 25
    initial_depth: float = 500.0
    depth_range: tuple = (300.0, 800.0)
    max_init_angle_deg: float = 90.0
    gradient: str = "analytic"
    fd_step: float = 1e-4
    tolerance: float = 1e-9
    seed: int = field(default_factory=lambda: Config.SEED)
    jobs: int = field(default_factory=lambda: Config.JOBS)

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("class weights must be >= 0")
        if not 0 < self.render_scale <= 1:
            raise ValueError("render_scale must be in (0, 1]")
        if self.gradient not in ("analytic", "numeric"):
            raise ValueError("gradient must be 'analytic' or 'numeric'")
        if not 0 < self.pixel_fraction <= 1:
            raise ValueError("pixel_fraction must be in (0, 1]")
        if self.depth_range[0] > self.depth_range[1] or self.depth_range[0] <= 0:
            raise ValueError("depth_range must be an increasing pair of positive depths")

    @classmethod
    def for_method(cls, method: str, **overrides) -> "OptimizerConfig":
        """Defaults for each registration method."""
        presets = {
            "silhouette": {"iterations": 200, "restarts": 1},
            "landmark-dr": {"iterations": 150, "restarts": 30},
            "chamfer-dr": {"iterations": 100, "phase2_iterations": 25, "restarts": 1},
        }
        values = dict(presets.get(method, {}))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def step_scale(self, iteration: int) -> float:
        """Linear decay from 1 to `final_step_fraction` over the run."""
        if self.iterations <= 1:
            return 1.0
        fraction = iteration / (self.iterations - 1)
        return 1.0 - (1.0 - self.final_step_fraction) * fraction

    def sigma_at(self, iteration: int) -> float:
        if self.iterations <= 1:
            return self.sigma_end
        fraction = iteration / (self.iterations - 1)
        return self.sigma_start + (self.sigma_end - self.sigma_start) * fraction
