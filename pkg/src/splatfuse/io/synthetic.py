"""Procedural test scenes rendered by exact ray casting.

A scene is a handful of spheres, axis-aligned boxes and finite planes with
(optionally checkered) albedo under Lambertian shading from one fixed
directional light plus ambient. Depth is the camera-space z of the nearest
hit, which is the same quantity the splat renderer produces.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from ..core.camera import Camera, look_at
from ..core.frame import FrameRGBD

MAX_PIXELS = 256 * 256
NEAR = 1e-6


@dataclass
class Primitive:
    kind: str  # "sphere", "box" or "plane"
    center: tuple
    albedo: tuple = (0.8, 0.8, 0.8)
    radius: float = 1.0  # sphere
    half_size: tuple = (0.5, 0.5, 0.5)  # box: half extents; plane: (half_u, half_v, unused)
    normal: tuple = (0.0, 1.0, 0.0)  # plane
    checker: float = 0.0  # 0 disables; otherwise checker contrast in (0, 1)
    checker_size: float = 0.25

    def __post_init__(self):
        if self.kind not in ("sphere", "box", "plane"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        self.center = tuple(float(v) for v in self.center)
        self.albedo = tuple(float(v) for v in self.albedo)
        self.half_size = tuple(float(v) for v in self.half_size)
        self.normal = tuple(float(v) for v in self.normal)


@dataclass
class RigSpec:
    """Orbit arc around ``target`` at fixed radius and elevation."""

    num_frames: int = 16
    width: int = 64
    height: int = 64
    fov_deg: float = 60.0
    radius: float = 4.0
    elevation_deg: float = 20.0
    azimuth_start_deg: float = -60.0
    azimuth_span_deg: float = 120.0
    target: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.width * self.height > MAX_PIXELS:
            raise ValueError(f"resolution {self.width}x{self.height} exceeds {MAX_PIXELS} pixels")
        if self.num_frames < 1 or self.width < 2 or self.height < 2:
            raise ValueError("need at least one frame of at least 2x2 pixels")
        self.target = tuple(float(v) for v in self.target)


@dataclass
class SyntheticSceneSpec:
    seed: int = 0
    primitives: List[Primitive] = field(default_factory=list)
    rig: RigSpec = field(default_factory=RigSpec)
    num_points: int = 2000
    light_dir: tuple = (-0.4, 0.8, 0.45)  # direction the light travels (world y is down)
    ambient: float = 0.35
    background: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.primitives:
            raise ValueError("a synthetic scene needs at least one primitive")
        self.primitives = [p if isinstance(p, Primitive) else Primitive(**p) for p in self.primitives]
        if isinstance(self.rig, dict):
            self.rig = RigSpec(**self.rig)
        self.light_dir = tuple(float(v) for v in self.light_dir)
        self.background = tuple(float(v) for v in self.background)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def default_scene_spec(seed=0, width=64, height=64, num_frames=16) -> SyntheticSceneSpec:
    """The bundled scene: a checkered floor, two spheres and a box."""
    prims = [
        Primitive("plane", (0.0, 0.6, 0.0), (0.75, 0.7, 0.6), half_size=(2.2, 2.2, 0.0),
                  normal=(0.0, -1.0, 0.0), checker=0.5, checker_size=0.5),
        Primitive("sphere", (-0.6, -0.05, 0.2), (0.85, 0.2, 0.15), radius=0.65),
        Primitive("box", (0.75, 0.15, -0.35), (0.2, 0.4, 0.85), half_size=(0.45, 0.45, 0.45)),
        Primitive("sphere", (0.35, 0.3, 0.9), (0.2, 0.75, 0.3), radius=0.3),
    ]
    return SyntheticSceneSpec(seed, prims, RigSpec(num_frames, width, height))


def rig_cameras(rig: RigSpec) -> List[Camera]:
    """Cameras on the orbit arc, looking at the target with world up = -y."""
    f = 0.5 * rig.width / math.tan(math.radians(rig.fov_deg) / 2)
    cx, cy = (rig.width - 1) / 2, (rig.height - 1) / 2
    target = np.asarray(rig.target, dtype=np.float64)
    el = math.radians(rig.elevation_deg)
    cams = []
    for i in range(rig.num_frames):
        frac = i / (rig.num_frames - 1) if rig.num_frames > 1 else 0.5
        az = math.radians(rig.azimuth_start_deg + rig.azimuth_span_deg * frac)
        # y points down in this world, so a raised camera has negative y
        eye = target + rig.radius * np.array([math.sin(az) * math.cos(el), -math.sin(el),
                                              -math.cos(az) * math.cos(el)])
        cams.append(look_at(eye, target, up=(0.0, -1.0, 0.0), fx=f, fy=f, cx=cx, cy=cy,
                            width=rig.width, height=rig.height))
    return cams


def _plane_axes(normal):
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
    u = np.cross(n, ref)
    u /= np.linalg.norm(u)
    return n, u, np.cross(n, u)


class SyntheticScene:
    """Analytic renderer for a :class:`SyntheticSceneSpec`."""

    def __init__(self, spec: SyntheticSceneSpec):
        self.spec = spec
        light = -np.asarray(spec.light_dir, dtype=np.float64)
        self.to_light = light / np.linalg.norm(light)

    # intersection ------------------------------------------------------
    def _hit(self, prim: Primitive, o, d):
        """Ray parameter (inf on miss) and unit normal for rays ``o + t d``."""
        c = np.asarray(prim.center)
        n_rays = d.shape[0]
        t = np.full(n_rays, np.inf)
        nrm = np.zeros((n_rays, 3))
        if prim.kind == "sphere":
            oc = o - c
            a = np.einsum("ij,ij->i", d, d)
            b = 2 * d @ oc
            cc = oc @ oc - prim.radius ** 2
            disc = b * b - 4 * a * cc
            ok = disc >= 0
            sq = np.sqrt(np.where(ok, disc, 0))
            t0 = (-b - sq) / (2 * a)
            t1 = (-b + sq) / (2 * a)
            tt = np.where(t0 > NEAR, t0, t1)
            ok &= tt > NEAR
            t = np.where(ok, tt, np.inf)
            p = o + np.where(np.isfinite(t), t, 0)[:, None] * d
            nrm = (p - c) / prim.radius
        elif prim.kind == "box":
            h = np.asarray(prim.half_size)
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / d
                ta = (c - h - o) * inv
                tb = (c + h - o) * inv
            tmin = np.minimum(ta, tb)
            tmax = np.maximum(ta, tb)
            tnear = np.nanmax(tmin, axis=1)
            tfar = np.nanmin(tmax, axis=1)
            ok = (tnear <= tfar) & (tfar > NEAR)
            tt = np.where(tnear > NEAR, tnear, tfar)
            t = np.where(ok, tt, np.inf)
            p = o + np.where(np.isfinite(t), t, 0)[:, None] * d
            local = (p - c) / h
            axis = np.argmax(np.abs(local), axis=1)
            nrm[np.arange(n_rays), axis] = np.sign(local[np.arange(n_rays), axis])
        else:
            n, u, v = _plane_axes(prim.normal)
            denom = d @ n
            with np.errstate(divide="ignore", invalid="ignore"):
                tt = ((c - o) @ n) / denom
            p = o + np.where(np.isfinite(tt), tt, 0)[:, None] * d
            lu, lv = (p - c) @ u, (p - c) @ v
            ok = (np.abs(denom) > 1e-12) & (tt > NEAR) & (np.abs(lu) <= prim.half_size[0]) & \
                (np.abs(lv) <= prim.half_size[1])
            t = np.where(ok, tt, np.inf)
            nrm = np.broadcast_to(n, (n_rays, 3)).copy()
        return t, nrm

    def albedo_at(self, prim: Primitive, points):
        base = np.broadcast_to(np.asarray(prim.albedo), points.shape).copy()
        if prim.checker > 0:
            cell = np.floor((points - np.asarray(prim.center)) / prim.checker_size).astype(np.int64)
            odd = (cell.sum(axis=1) % 2) == 1
            base[odd] *= 1.0 - prim.checker
        return base

    def shade(self, albedo, normals):
        lam = np.clip(normals @ self.to_light, 0.0, 1.0)
        k = self.spec.ambient + (1.0 - self.spec.ambient) * lam
        return np.clip(albedo * k[:, None], 0.0, 1.0)

    def render(self, camera: Camera) -> FrameRGBD:
        """Ground-truth frame: shaded color, z-depth, binary transmittance."""
        rays = camera.pixel_rays().reshape(-1, 3)
        d = rays @ camera.rotation  # world directions scaled so the parameter equals z-depth
        o = camera.center
        best = np.full(d.shape[0], np.inf)
        who = np.full(d.shape[0], -1)
        normals = np.zeros_like(d)
        for i, prim in enumerate(self.spec.primitives):
            t, n = self._hit(prim, o, d)
            closer = t < best
            best[closer] = t[closer]
            who[closer] = i
            normals[closer] = n[closer]
        hit = np.isfinite(best)
        rgb = np.broadcast_to(np.asarray(self.spec.background, dtype=np.float64), d.shape).copy()
        pts = o + np.where(hit, best, 0)[:, None] * d
        # shade with normals facing the camera so thin planes look the same from both sides
        facing = np.where((np.einsum("ij,ij->i", normals, d) > 0)[:, None], -normals, normals)
        for i, prim in enumerate(self.spec.primitives):
            sel = who == i
            if np.any(sel):
                rgb[sel] = self.shade(self.albedo_at(prim, pts[sel]), facing[sel])
        h, w = camera.height, camera.width
        depth = np.where(hit, best, 0.0).reshape(h, w)
        return FrameRGBD(rgb.reshape(h, w, 3), depth, np.where(hit, 0.0, 1.0).reshape(h, w),
                         hit.reshape(h, w))

    # surface sampling --------------------------------------------------
    def _area(self, prim: Primitive):
        if prim.kind == "sphere":
            return 4 * math.pi * prim.radius ** 2
        if prim.kind == "box":
            a, b, c = (2 * x for x in prim.half_size)
            return 2 * (a * b + b * c + a * c)
        return 4 * prim.half_size[0] * prim.half_size[1]

    def _sample(self, prim: Primitive, n, rng):
        c = np.asarray(prim.center)
        if prim.kind == "sphere":
            v = rng.normal(size=(n, 3))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            return c + prim.radius * v, v
        if prim.kind == "plane":
            nrm, u, v = _plane_axes(prim.normal)
            a = rng.uniform(-1, 1, size=(n, 2)) * np.asarray(prim.half_size[:2])
            return c + a[:, :1] * u + a[:, 1:] * v, np.broadcast_to(nrm, (n, 3)).copy()
        h = np.asarray(prim.half_size)
        areas = np.array([h[1] * h[2], h[0] * h[2], h[0] * h[1]] * 2)
        face = rng.choice(6, size=n, p=areas / areas.sum())
        local = rng.uniform(-1, 1, size=(n, 3))
        axis = face % 3
        sign = np.where(face < 3, 1.0, -1.0)
        local[np.arange(n), axis] = sign
        nrm = np.zeros((n, 3))
        nrm[np.arange(n), axis] = sign
        return c + local * h, nrm

    def sample_points(self, n=None, rng=None):
        """Area-weighted surface samples: (positions, albedo colors, normals)."""
        n = self.spec.num_points if n is None else n
        rng = np.random.default_rng(self.spec.seed) if rng is None else rng
        prims = self.spec.primitives
        areas = np.array([self._area(p) for p in prims])
        counts = rng.multinomial(n, areas / areas.sum())
        pos, col, nrm = [], [], []
        for prim, k in zip(prims, counts):
            if k == 0:
                continue
            p, nn = self._sample(prim, int(k), rng)
            pos.append(p)
            nrm.append(nn)
            col.append(self.albedo_at(prim, p))
        return np.concatenate(pos), np.concatenate(col), np.concatenate(nrm)


def synth_scene(spec: Optional[SyntheticSceneSpec] = None):
    """Build the dataset for ``spec`` and return it with its analytic renderer.

    Returns:
        (SceneDataset, SyntheticScene)
    """
    from .dataset import SceneDataset

    spec = default_scene_spec() if spec is None else spec
    scene = SyntheticScene(spec)
    cams = rig_cameras(spec.rig)
    frames = [scene.render(c) for c in cams]
    pts, cols, _ = scene.sample_points()
    return SceneDataset(cams, frames, pts, cols, scene_spec=spec), scene
