"""Single-channel depth images in millimeters with validity masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class DepthMap:
    """Per-pixel depth in millimeters; invalid pixels carry depth 0."""

    depth: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.depth.ndim != 2 or self.depth.shape != self.valid.shape:
            raise ValueError(f"depth {self.depth.shape} and valid {self.valid.shape} must be matching 2-D arrays")
        self.depth = np.where(self.valid, self.depth, 0.0)

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def width(self):
        return self.depth.shape[1]

    @classmethod
    def dense(cls, depth) -> "DepthMap":
        depth = np.asarray(depth, dtype=np.float64)
        return cls(depth, np.ones(depth.shape, dtype=bool))

    @classmethod
    def from_encoded(cls, depth) -> "DepthMap":
        """Zero means missing; anything positive is a measurement."""
        depth = np.asarray(depth, dtype=np.float64)
        return cls(depth, depth > 0)

    def copy(self) -> "DepthMap":
        return DepthMap(self.depth.copy(), self.valid.copy())

    def flip_horizontal(self) -> "DepthMap":
        return DepthMap(self.depth[:, ::-1].copy(), self.valid[:, ::-1].copy())

    def count_valid(self) -> int:
        return int(self.valid.sum())
