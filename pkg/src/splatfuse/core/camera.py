"""Pinhole camera with a rigid world-to-camera pose.

Conventions: camera x points right, y points down, z points forward (the
viewing direction). A world point ``X`` maps to camera space as
``R @ X + t`` and to pixel coordinates as ``(fx * x / z + cx, fy * y / z + cy)``.
Pixel ``(i, j)`` has its center at integer coordinates ``(i, j)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import BadRotation

ROTATION_TOL = 1e-9


def check_rotation(rotation, tol=ROTATION_TOL):
    """Raise BadRotation unless ``rotation`` is orthonormal with det +1."""
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape != (3, 3) or not np.all(np.isfinite(rotation)):
        raise BadRotation("rotation must be a finite 3x3 matrix")
    err = np.abs(rotation @ rotation.T - np.eye(3)).max()
    if err > tol:
        raise BadRotation(f"rotation is not orthonormal (max error {err:.3g})")
    det = np.linalg.det(rotation)
    if abs(det - 1.0) > tol:
        raise BadRotation(f"rotation determinant is {det:.6g}, expected +1")


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.array(self.translation, dtype=np.float64).reshape(3)
        self.width = int(self.width)
        self.height = int(self.height)

    def validate(self, tol=ROTATION_TOL):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("camera width and height must be positive")
        check_rotation(self.rotation, tol)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[2].copy()

    @property
    def intrinsics(self):
        return (self.fx, self.fy, self.cx, self.cy, self.width, self.height)

    def same_intrinsics(self, other: "Camera") -> bool:
        return self.intrinsics == other.intrinsics

    def world_to_camera(self, points):
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def camera_to_world(self, points):
        return (np.asarray(points, dtype=np.float64) - self.translation) @ self.rotation

    def project(self, points):
        """Project world points; returns (pixels (N, 2), camera-space depth (N,))."""
        pc = np.atleast_2d(self.world_to_camera(points))
        z = pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            px = self.fx * pc[:, 0] / z + self.cx
            py = self.fy * pc[:, 1] / z + self.cy
        return np.stack([px, py], axis=1), z

    def pixel_rays(self):
        """Unnormalized camera-space ray directions (H, W, 3) with z = 1."""
        xs = (np.arange(self.width, dtype=np.float64) - self.cx) / self.fx
        ys = (np.arange(self.height, dtype=np.float64) - self.cy) / self.fy
        rx, ry = np.meshgrid(xs, ys)
        return np.stack([rx, ry, np.ones_like(rx)], axis=-1)

    def cropped(self, x0: int, y0: int, width: int, height: int) -> "Camera":
        """Camera seeing the sub-window starting at pixel (x0, y0)."""
        return Camera(self.fx, self.fy, self.cx - x0, self.cy - y0, width, height,
                      self.rotation.copy(), self.translation.copy())

    def copy(self) -> "Camera":
        return Camera(self.fx, self.fy, self.cx, self.cy, self.width, self.height,
                      self.rotation.copy(), self.translation.copy())

    def key(self):
        """Hashable identity used to match a backward pass to its forward pass."""
        return (self.intrinsics, self.rotation.tobytes(), self.translation.tobytes())

    def __eq__(self, other):
        if not isinstance(other, Camera):
            return NotImplemented
        return self.key() == other.key()


def look_at(eye, target, up=(0.0, 1.0, 0.0), *, fx, fy, cx, cy, width, height) -> Camera:
    """Build a camera at ``eye`` looking at ``target``; ``up`` is the world up vector."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    down = -np.asarray(up, dtype=np.float64)
    x = np.cross(down, z)
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise ValueError("up vector is parallel to the viewing direction")
    x /= nx
    y = np.cross(z, x)
    rotation = np.stack([x, y, z])
    return Camera(fx, fy, cx, cy, width, height, rotation, -rotation @ eye)


def orthonormalize(rotation):
    """Nearest rotation matrix (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(np.asarray(rotation, dtype=np.float64))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r
