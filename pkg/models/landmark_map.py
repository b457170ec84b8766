from dataclasses import dataclass
from typing import Optional

import numpy as np

# Bit per class; a pixel may carry several classes.
RIDGE = 1
LIGAMENT = 2
SILHOUETTE = 4

CLASS_BITS = {
    "ridge": RIDGE,
    "ligament": LIGAMENT,
    "silhouette": SILHOUETTE,
}
MAP_CLASSES = tuple(CLASS_BITS)


@dataclass(frozen=True, eq=False)
class LandmarkMap2D:
    """Per-pixel class bitmask at image resolution, shape (height, width)."""
    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise ValueError(f"Landmark map must be 2D, got shape {bits.shape}")
        if np.any(bits & ~np.uint8(RIDGE | LIGAMENT | SILHOUETTE)):
            raise ValueError("Landmark map carries unknown class bits")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def empty(cls, width: int, height: int) -> "LandmarkMap2D":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def from_channels(
        cls,
        shape: tuple[int, int],
        ridge: Optional[np.ndarray] = None,
        ligament: Optional[np.ndarray] = None,
        silhouette: Optional[np.ndarray] = None,
    ) -> "LandmarkMap2D":
        bits = np.zeros(shape, dtype=np.uint8)
        for channel, bit in ((ridge, RIDGE), (ligament, LIGAMENT), (silhouette, SILHOUETTE)):
            if channel is not None:
                bits[np.asarray(channel, dtype=bool)] |= bit
        return cls(bits)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def channel(self, name: str) -> np.ndarray:
        return (self.bits & CLASS_BITS[name]) > 0

    def has_class(self, name: str) -> bool:
        return bool(np.any(self.channel(name)))

    def pixels(self, name: str) -> np.ndarray:
        """(N, 2) array of (u, v) pixel coordinates of a class."""
        rows, cols = np.nonzero(self.channel(name))
        return np.stack([cols, rows], axis=1).astype(float)

    def with_channel(self, name: str, mask: np.ndarray) -> "LandmarkMap2D":
        bit = np.uint8(CLASS_BITS[name])
        bits = self.bits & ~bit
        bits = bits | (np.asarray(mask, dtype=bool).astype(np.uint8) * bit)
        return LandmarkMap2D(bits)

    def union(self, other: "LandmarkMap2D") -> "LandmarkMap2D":
        if other.shape != self.shape:
            raise ValueError(f"Cannot merge maps of shapes {self.shape} and {other.shape}")
        return LandmarkMap2D(self.bits | other.bits)

    def is_empty(self) -> bool:
        return not np.any(self.bits)

    def __eq__(self, other) -> bool:
        return isinstance(other, LandmarkMap2D) and np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SoftMask:
    """Per-pixel occupancy in [0, 1], shape (height, width)."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError(f"Mask must be 2D, got shape {values.shape}")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("Mask values must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def hard(self, threshold: float = 0.5) -> np.ndarray:
        return self.values >= threshold

    def is_empty(self) -> bool:
        return not np.any(self.values > 0)
