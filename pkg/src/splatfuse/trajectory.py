"""Novel camera paths for the fusion cycle.

Two kinds of fragment are produced: interpolations strictly between a pair
of neighboring input views, and a spiral around the mean input camera that
keeps looking at a common focus point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .core.camera import Camera, look_at, orthonormalize
from .errors import IncompatibleIntrinsics

FRAGMENT_LENGTH = 16


@dataclass
class Trajectory:
    cameras: List[Camera] = field(default_factory=list)
    fragment_length: int = FRAGMENT_LENGTH
    kind: str = "custom"

    def __post_init__(self):
        for c in self.cameras[1:]:
            if not c.same_intrinsics(self.cameras[0]):
                raise IncompatibleIntrinsics("trajectory cameras must share intrinsics")

    def __len__(self):
        return len(self.cameras)

    def __iter__(self):
        return iter(self.cameras)

    def __getitem__(self, i):
        return self.cameras[i]


def _with_pose(template: Camera, rotation, center) -> Camera:
    rotation = orthonormalize(rotation)
    return Camera(template.fx, template.fy, template.cx, template.cy, template.width,
                  template.height, rotation, -rotation @ np.asarray(center, dtype=np.float64))


def interpolate_pose(a: Camera, b: Camera, t: float) -> Camera:
    """Slerp the rotation and lerp the camera center; endpoints are returned exactly."""
    if not a.same_intrinsics(b):
        raise IncompatibleIntrinsics("cannot interpolate cameras with different intrinsics")
    if t == 0:
        return a.copy()
    if t == 1:
        return b.copy()
    slerp = Slerp([0.0, 1.0], Rotation.from_matrix(np.stack([a.rotation, b.rotation])))
    rot = slerp([t]).as_matrix()[0]
    center = a.center + t * (b.center - a.center)
    return _with_pose(a, rot, center)


def mean_frame(cameras: Sequence[Camera]):
    """Mean center and the nearest rotation to the mean of the input rotations."""
    centers = np.stack([c.center for c in cameras])
    rot = orthonormalize(np.mean([c.rotation for c in cameras], axis=0))
    return centers.mean(axis=0), rot


def focus_depth(cameras: Sequence[Camera], default=1.0) -> float:
    """Median distance along each optical axis to the point nearest all axes.

    Falls back to ``default`` when the axes are (nearly) parallel, e.g. for a
    single camera, or when the point lies behind the cameras.
    """
    if len(cameras) < 2:
        return default
    a = np.zeros((3, 3))
    rhs = np.zeros(3)
    for c in cameras:
        f = c.forward
        p = np.eye(3) - np.outer(f, f)
        a += p
        rhs += p @ c.center
    if np.linalg.cond(a) > 1e6:
        return default
    focus = np.linalg.solve(a, rhs)
    depths = [float(c.forward @ (focus - c.center)) for c in cameras]
    d = float(np.median(depths))
    return d if d > 0 else default


def center_spread(cameras: Sequence[Camera]) -> float:
    centers = np.stack([c.center for c in cameras])
    return float(np.linalg.norm(centers - centers.mean(axis=0), axis=1).mean())


def spiral_path(cameras: Sequence[Camera], n: int, radius_scale: float = 0.5, *,
                turns: float = 1.0, dolly: float = 0.0, spherical: bool = False,
                phase: float = 0.0, depth=None) -> Trajectory:
    """Poses circling the mean camera in its own image plane.

    Frame ``j`` sits at angle ``phase + 2*pi*turns*j/n`` on a circle of radius
    ``radius_scale * spread`` (spread = mean distance of input centers from
    their mean; a tenth of the focus depth when the inputs coincide), pushed
    along the mean viewing axis by ``dolly * radius * sin(angle / 2)``. The
    spherical variant adds a vertical sinusoid at twice the angular rate.
    Every pose looks at the mean center plus the mean forward axis times the
    focus depth.
    """
    if len(cameras) == 0:
        raise ValueError("spiral_path needs at least one camera")
    template = cameras[0]
    center, rot = mean_frame(cameras)
    right, down, fwd = rot
    d = focus_depth(cameras) if depth is None else float(depth)
    spread = center_spread(cameras)
    if spread < 1e-12:
        spread = 0.1 * d
    radius = radius_scale * spread
    if radius == 0:
        pose = _with_pose(template, rot, center)
        return Trajectory([pose.copy() for _ in range(n)], n, "spiral")
    target = center + fwd * d
    out = []
    for j in range(n):
        ang = phase + 2.0 * math.pi * turns * j / n
        off = radius * (math.cos(ang) * right + math.sin(ang) * down)
        off = off + dolly * radius * math.sin(0.5 * ang) * fwd
        if spherical:
            off = off + 0.5 * radius * math.sin(2.0 * ang) * down
        eye = center + off
        out.append(look_at(eye, target, up=-down, fx=template.fx, fy=template.fy, cx=template.cx,
                           cy=template.cy, width=template.width, height=template.height))
    return Trajectory(out, n, "spherical" if spherical else "spiral")


def interpolation_fragment(a: Camera, b: Camera, length=FRAGMENT_LENGTH) -> Trajectory:
    """``length`` poses strictly between ``a`` and ``b`` (t = (j+1)/(length+1))."""
    cams = [interpolate_pose(a, b, (j + 1) / (length + 1)) for j in range(length)]
    return Trajectory(cams, length, "interpolation")


def sample_fusion_trajectories(cameras: Sequence[Camera], cycle_index: int, seed: int = 0,
                               fragment_length: int = FRAGMENT_LENGTH,
                               radius_scale: float = 0.5) -> List[Trajectory]:
    """One fragment per cycle: interpolation on even cycles, spiral on odd ones.

    The adjacent pair (and the spiral's starting phase and shape) are drawn
    from a generator seeded by ``(seed, cycle_index)``. With a single input
    camera every cycle uses the spiral.
    """
    if len(cameras) == 0:
        raise ValueError("need at least one input camera")
    rng = np.random.default_rng([seed, cycle_index])
    if cycle_index % 2 == 0 and len(cameras) >= 2:
        i = int(rng.integers(len(cameras) - 1))
        return [interpolation_fragment(cameras[i], cameras[i + 1], fragment_length)]
    phase = float(rng.uniform(0, 2 * math.pi))
    spherical = (cycle_index // 2) % 2 == 1
    return [spiral_path(cameras, fragment_length, radius_scale, phase=phase, spherical=spherical)]
