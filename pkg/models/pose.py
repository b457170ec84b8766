from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ParseError

ORTHONORMAL_TOLERANCE = 1e-9


def nearest_rotation(matrix: np.ndarray) -> np.ndarray:
    """Project a 3x3 matrix onto SO(3) (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(np.asarray(matrix, dtype=float))
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    return u @ np.diag([1.0, 1.0, d]) @ vt


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric cross-product matrix of each 3-vector in the last axis."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


@dataclass(frozen=True, eq=False)
class RigidPose:
    """Model-to-camera transform x_cam = R·x_model + t, translation in millimetres."""
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(3, 3)
        t = np.array(self.t, dtype=float).reshape(3)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls()

    @classmethod
    def from_rotvec(cls, rotvec, t=(0.0, 0.0, 0.0)) -> "RigidPose":
        return cls(Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_matrix(), t)

    @classmethod
    def from_euler(cls, seq: str, angles, degrees: bool = True, t=(0.0, 0.0, 0.0)) -> "RigidPose":
        return cls(Rotation.from_euler(seq, angles, degrees=degrees).as_matrix(), t)

    def is_valid(self, tolerance: float = ORTHONORMAL_TOLERANCE) -> bool:
        orthonormal = np.linalg.norm(self.R.T @ self.R - np.eye(3)) < tolerance
        proper = abs(np.linalg.det(self.R) - 1.0) < tolerance
        return bool(orthonormal and proper and np.all(np.isfinite(self.t)))

    def orthonormalized(self) -> "RigidPose":
        return RigidPose(nearest_rotation(self.R), self.t)

    def inverse(self) -> "RigidPose":
        return RigidPose(self.R.T, -self.R.T @ self.t)

    def compose(self, other: "RigidPose") -> "RigidPose":
        """self ∘ other: apply `other` first, then `self`."""
        return RigidPose(self.R @ other.R, self.R @ other.t + self.t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.R.T + self.t

    def retract(self, xi) -> "RigidPose":
        """Apply a 6-DoF increment (ω, δ).

        The rotation exp(ω) is composed on the left and acts about the model
        origin; δ is added to the translation in the camera frame.
        """
        xi = np.asarray(xi, dtype=float).reshape(6)
        delta_R = Rotation.from_rotvec(xi[:3]).as_matrix()
        return RigidPose(nearest_rotation(delta_R @ self.R), self.t + xi[3:])

    @property
    def rotvec(self) -> np.ndarray:
        return Rotation.from_matrix(self.R).as_rotvec()

    def rotation_error(self, other: "RigidPose") -> float:
        """Geodesic angle in radians between the two rotations."""
        cos = (np.trace(self.R.T @ other.R) - 1.0) / 2.0
        return float(np.arccos(np.clip(cos, -1.0, 1.0)))

    def translation_error(self, other: "RigidPose") -> float:
        return float(np.linalg.norm(self.t - other.t))

    def allclose(self, other: "RigidPose", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.R, other.R, atol=atol) and np.allclose(self.t, other.t, atol=atol))

    @classmethod
    def from_dict(cls, data: dict, path: str = None) -> "RigidPose":
        """Parse {"R": 9 numbers row-major, "t": 3 numbers}."""
        try:
            R = np.array(data["R"], dtype=float).reshape(3, 3)
            t = np.array(data["t"], dtype=float).reshape(3)
        except KeyError as e:
            raise ParseError(f"missing pose key {e}", path=path) from e
        except (TypeError, ValueError) as e:
            raise ParseError(f"invalid pose: {e}", path=path) from e
        pose = cls(R, t)
        if not pose.is_valid(1e-6):
            raise ParseError("pose rotation is not orthonormal", path=path)
        return pose

    def to_dict(self) -> dict:
        return {
            "R": [float(v) for v in self.R.reshape(-1)],
            "t": [float(v) for v in self.t],
        }

    def __repr__(self) -> str:
        angle = np.degrees(np.linalg.norm(self.rotvec))
        return f"RigidPose(angle={angle:.3f}deg, t={np.round(self.t, 3).tolist()})"
