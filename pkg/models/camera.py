from dataclasses import dataclass, replace
import math

import numpy as np

from .errors import ParseError

DISTORTION_KEYS = ("k1", "k2", "k3", "p1", "p2")


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera with Brown–Conrady lens distortion.

    Pixel (row i, column j) is centred on (u=j, v=i).
    """
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"Focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"Image size must be positive, got {self.width}x{self.height}")
        values = (self.fx, self.fy, self.cx, self.cy) + self.distortion
        if not all(math.isfinite(v) for v in values):
            raise ValueError("Camera parameters must be finite")

    @property
    def distortion(self) -> tuple:
        return (self.k1, self.k2, self.k3, self.p1, self.p2)

    @property
    def has_distortion(self) -> bool:
        return any(c != 0.0 for c in self.distortion)

    @property
    def shape(self) -> tuple[int, int]:
        """Image array shape (height, width)."""
        return (self.height, self.width)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    def scaled(self, scale: float) -> "CameraIntrinsics":
        """Intrinsics of the same camera rendered at `scale` times the resolution."""
        if not 0 < scale <= 1:
            raise ValueError(f"Render scale must be in (0, 1], got {scale}")
        if scale == 1:
            return self
        return replace(
            self,
            fx=self.fx * scale,
            fy=self.fy * scale,
            cx=(self.cx + 0.5) * scale - 0.5,
            cy=(self.cy + 0.5) * scale - 0.5,
            width=max(1, int(round(self.width * scale))),
            height=max(1, int(round(self.height * scale))),
        )

    @classmethod
    def from_dict(cls, data: dict, path: str = None) -> "CameraIntrinsics":
        """Build intrinsics from the camera JSON object (distortion keys optional)."""
        try:
            kwargs = {
                "fx": float(data["fx"]),
                "fy": float(data["fy"]),
                "cx": float(data["cx"]),
                "cy": float(data["cy"]),
                "width": int(data["width"]),
                "height": int(data["height"]),
            }
            for key in DISTORTION_KEYS:
                kwargs[key] = float(data.get(key, 0.0))
            return cls(**kwargs)
        except KeyError as e:
            raise ParseError(f"missing camera key {e}", path=path) from e
        except (TypeError, ValueError) as e:
            raise ParseError(f"invalid camera parameters: {e}", path=path) from e

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "k1": self.k1, "k2": self.k2, "k3": self.k3,
            "p1": self.p1, "p2": self.p2,
            "width": self.width, "height": self.height,
        }
