from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np


@dataclass
class FrameRGBD:
    """One RGB-D frame: linear rgb (H, W, 3), depth (H, W), transmittance (H, W), valid (H, W)."""

    rgb: np.ndarray
    depth: np.ndarray
    transmittance: np.ndarray
    valid: np.ndarray
    # forward-pass cache attached by the renderer; never serialized or compared
    cache: Optional[Any] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        self.depth = np.asarray(self.depth, dtype=np.float64)
        self.transmittance = np.asarray(self.transmittance, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        h, w = self.depth.shape
        if self.rgb.shape != (h, w, 3) or self.transmittance.shape != (h, w) or self.valid.shape != (h, w):
            raise ValueError("FrameRGBD component shapes disagree")

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def width(self):
        return self.depth.shape[1]

    @property
    def shape(self):
        return self.depth.shape

    @property
    def opacity(self):
        """Accumulated opacity, 1 - transmittance."""
        return 1.0 - self.transmittance

    @classmethod
    def from_depth(cls, rgb, depth):
        """Frame whose validity is ``depth > 0`` and transmittance 0 where valid, 1 elsewhere."""
        depth = np.asarray(depth, dtype=np.float64)
        valid = np.isfinite(depth) & (depth > 0)
        depth = np.where(valid, depth, 0.0)
        return cls(rgb, depth, np.where(valid, 0.0, 1.0), valid)

    def crop(self, x0, y0, w, h) -> "FrameRGBD":
        sl = (slice(y0, y0 + h), slice(x0, x0 + w))
        return FrameRGBD(self.rgb[sl].copy(), self.depth[sl].copy(),
                         self.transmittance[sl].copy(), self.valid[sl].copy())

    def copy(self) -> "FrameRGBD":
        return FrameRGBD(self.rgb.copy(), self.depth.copy(), self.transmittance.copy(), self.valid.copy())

    def check(self):
        """Raise ValueError if value-range invariants are violated."""
        if np.any(self.rgb < 0) or np.any(self.rgb > 1):
            raise ValueError("rgb outside [0, 1]")
        if np.any(self.transmittance < 0) or np.any(self.transmittance > 1):
            raise ValueError("transmittance outside [0, 1]")
        if np.any(self.depth[self.valid] < 0):
            raise ValueError("negative depth on a valid pixel")
