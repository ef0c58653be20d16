"""The restoration-oracle contract and its local implementations.

An oracle receives a fragment of artifact-prone RGB-D renderings along a
camera path, plus one reference input view, and returns a restored RGB-D
fragment of the same length and resolution.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import List, Optional

from ..core.camera import Camera
from ..core.frame import FrameRGBD
from ..errors import BadResponse, ShapeMismatch


@dataclass
class OracleRequest:
    frames: List[FrameRGBD]
    cameras: List[Camera]
    reference: FrameRGBD
    reference_camera: Optional[Camera] = None

    def validate(self):
        if len(self.frames) != len(self.cameras) or not self.frames:
            raise ShapeMismatch(f"{len(self.frames)} frames for {len(self.cameras)} cameras")
        shape = self.frames[0].shape
        for f, c in zip(self.frames, self.cameras):
            if f.shape != shape or (c.height, c.width) != shape:
                raise ShapeMismatch("request frames and cameras must share one resolution")
        if self.reference.shape != shape:
            raise ShapeMismatch("reference frame size differs from the fragment")


@dataclass
class OracleResponse:
    frames: List[FrameRGBD]

    def validate(self, request: OracleRequest):
        """Raise BadResponse unless count, size and value ranges match ``request``."""
        if len(self.frames) != len(request.frames):
            raise BadResponse(f"oracle returned {len(self.frames)} frames for {len(request.frames)}")
        for f, g in zip(self.frames, request.frames):
            if f.shape != g.shape:
                raise BadResponse(f"oracle frame size {f.shape} differs from request {g.shape}")
            if f.rgb.min() < 0 or f.rgb.max() > 1:
                raise BadResponse("oracle rgb outside [0, 1]")
            if (f.depth[f.valid] <= 0).any():
                raise BadResponse("oracle depth must be positive where valid")
        return self


class Oracle:
    """Interface: ``restore(request) -> response`` (blocking)."""

    name = "oracle"

    def restore(self, request: OracleRequest) -> OracleResponse:
        raise NotImplementedError


class IdentityOracle(Oracle):
    """Returns copies of the request frames unchanged."""

    name = "identity"

    def restore(self, request):
        request.validate()
        return OracleResponse([f.copy() for f in request.frames])


class GroundTruthOracle(Oracle):
    """Answers with the exact synthetic-scene frame at each requested camera.

    Only meaningful for synthetic data; it upper-bounds what a perfect
    restoration model could contribute to the fusion loop.
    """

    name = "gt"

    def __init__(self, scene):
        self.scene = scene

    def restore(self, request):
        request.validate()
        return OracleResponse([self.scene.render(c) for c in request.cameras])


class CountingOracle(Oracle):
    """Wraps another oracle and records every call (thread-safe)."""

    name = "counting"

    def __init__(self, inner: Oracle, clock=None):
        self.inner = inner
        self.clock = clock
        self.calls = 0
        self.iterations = []
        self._lock = threading.Lock()

    def restore(self, request):
        with self._lock:
            self.calls += 1
            if self.clock is not None:
                self.iterations.append(self.clock())
        return self.inner.restore(request)
