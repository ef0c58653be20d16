"""Forward and backward rendering of a SplatCloud.

Each pixel ray is intersected with every disk plane whose screen bounding
box contains the pixel. Hits are sorted front to back by intersection depth
(ties by disk index) and alpha-composited with ``a = opacity * g``:

    C = sum_i c_i a_i T_i + bg * T,   T_i = prod_{j<i} (1 - a_j)
    D = sum_i d_i a_i T_i / (1 - T)   (valid only when 1 - T > depth_eps)

Compositing stops after the hit that drops transmittance below
``min_transmittance``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import StaleForward
from . import backend as _backend
from . import sh as shm
from .camera import Camera
from .frame import FrameRGBD
from .splats import GaussianDisk, SplatCloud


@dataclass(frozen=True)
class RasterSettings:
    near: float = 0.01
    cutoff_sigma: float = 3.0
    min_transmittance: float = 1e-4
    depth_eps: float = 1e-6

    @property
    def cutoff_q(self):
        return self.cutoff_sigma ** 2

    @property
    def cutoff_weight(self):
        return math.exp(-0.5 * self.cutoff_q)


DEFAULT_SETTINGS = RasterSettings()


@dataclass
class Footprint:
    center: tuple
    bbox: tuple  # inclusive pixel range (x0, y0, x1, y1)
    depth: float


@dataclass
class SplatGradients:
    position: np.ndarray
    opacity: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray  # local angles about (t_u, t_v, normal)
    sh: np.ndarray
    tangent_u: np.ndarray
    tangent_v: np.ndarray
    screen: np.ndarray  # |dL/d(projected center)| in normalized device coordinates
    contributed: np.ndarray

    def __len__(self):
        return self.position.shape[0]


@dataclass
class _Cache:
    key: tuple
    backend: str
    mu: np.ndarray
    ta: np.ndarray
    tb: np.ndarray
    scales: np.ndarray
    alpha: np.ndarray
    colors: np.ndarray
    sh_aux: tuple
    hit_off: np.ndarray
    hit_idx: np.ndarray
    background: np.ndarray
    settings: RasterSettings


def _to_camera(positions, tangent_u, tangent_v, camera):
    r = camera.rotation
    return positions @ r.T + camera.translation, tangent_u @ r.T, tangent_v @ r.T


def footprints(mu, ta, tb, scales, camera: Camera, settings=DEFAULT_SETTINGS):
    """Screen bounding boxes for disks already in camera space.

    Returns (bbox (N, 4) int32, culled (N,) bool). Culled rows hold an empty
    box (x1 < x0). A box is conservative: it contains every pixel whose
    ray hits the disk with ``g`` at or above the cutoff weight.
    """
    n = mu.shape[0]
    k = settings.cutoff_sigma
    w, h = camera.width, camera.height
    su = (k * scales[:, 0])[:, None] * ta
    sv = (k * scales[:, 1])[:, None] * tb
    corners = np.stack([mu + su + sv, mu + su - sv, mu - su + sv, mu - su - sv], axis=1)
    cz = corners[..., 2]
    front = np.all(cz > settings.near, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        px = camera.fx * corners[..., 0] / cz + camera.cx
        py = camera.fy * corners[..., 1] / cz + camera.cy
    x0 = np.where(front, np.ceil(np.nanmin(np.where(front[:, None], px, 0), axis=1)), 0)
    x1 = np.where(front, np.floor(np.nanmax(np.where(front[:, None], px, 0), axis=1)), w - 1)
    y0 = np.where(front, np.ceil(np.nanmin(np.where(front[:, None], py, 0), axis=1)), 0)
    y1 = np.where(front, np.floor(np.nanmax(np.where(front[:, None], py, 0), axis=1)), h - 1)
    # clip before casting so huge projections stay in int range
    x0 = np.clip(x0, 0, w); x1 = np.clip(x1, -1, w - 1)
    y0 = np.clip(y0, 0, h); y1 = np.clip(y1, -1, h - 1)
    bbox = np.stack([x0, y0, x1, y1], axis=1).astype(np.int32)
    culled = (mu[:, 2] <= settings.near) | (bbox[:, 2] < bbox[:, 0]) | (bbox[:, 3] < bbox[:, 1])
    bbox[culled] = (0, 0, -1, -1)
    return bbox.reshape(n, 4), culled


def project_splat(disk: GaussianDisk, camera: Camera, settings=DEFAULT_SETTINGS) -> Optional[Footprint]:
    """Screen footprint of one disk, or None when it is culled."""
    mu, ta, tb = _to_camera(disk.position[None], disk.tangent_u[None], disk.tangent_v[None], camera)
    bbox, culled = footprints(mu, ta, tb, np.array([[disk.scale_u, disk.scale_v]]), camera, settings)
    if culled[0]:
        return None
    z = mu[0, 2]
    center = (camera.fx * mu[0, 0] / z + camera.cx, camera.fy * mu[0, 1] / z + camera.cy)
    return Footprint(center, tuple(int(b) for b in bbox[0]), float(z))


def eval_splat_at_pixel(disk: GaussianDisk, camera: Camera, pixel, settings=DEFAULT_SETTINGS):
    """Gaussian weight and camera-space depth where the pixel ray meets the disk.

    Returns ``(g, depth)`` or None for no hit (ray parallel to the plane,
    intersection behind the near plane, or weight below the cutoff).
    """
    mu, ta, tb = _to_camera(disk.position[None], disk.tangent_u[None], disk.tangent_v[None], camera)
    mu, ta, tb = mu[0], ta[0], tb[0]
    r = np.array([(pixel[0] - camera.cx) / camera.fx, (pixel[1] - camera.cy) / camera.fy, 1.0])
    n = np.cross(ta, tb)
    nr = n @ r
    if abs(nr) < 1e-9:
        return None
    lam = (n @ mu) / nr
    if lam <= settings.near:
        return None
    x = lam * r - mu
    q = (ta @ x / disk.scale_u) ** 2 + (tb @ x / disk.scale_v) ** 2
    if q > settings.cutoff_q:
        return None
    return math.exp(-0.5 * q), float(lam)


def _cloud_key(cloud, camera, background, settings):
    return (id(cloud), cloud.version, len(cloud), camera.key(), tuple(background), settings)


def render(cloud: SplatCloud, camera: Camera, background=(0.0, 0.0, 0.0),
           settings: RasterSettings = DEFAULT_SETTINGS, backend: Optional[str] = None) -> FrameRGBD:
    """Render rgb, depth, transmittance and validity for ``camera``.

    The returned frame carries the forward cache consumed by
    :func:`render_backward`.
    """
    name, kern = _backend.get(backend)
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    mu, ta, tb = _to_camera(cloud.positions, cloud.tangent_u, cloud.tangent_v, camera)
    scales = np.exp(cloud.log_scales)
    alpha = np.ascontiguousarray(cloud.opacities, dtype=np.float64)
    colors, sh_aux = shm.evaluate(cloud.sh, cloud.positions, camera.center)
    bbox, _ = footprints(mu, ta, tb, scales, camera, settings)
    mu, ta, tb, scales, colors = (np.ascontiguousarray(a) for a in (mu, ta, tb, scales, colors))
    rgb, depth, trans, valid, hit_off, hit_idx = kern.forward(
        mu, ta, tb, scales, alpha, colors, np.ascontiguousarray(bbox),
        camera.width, camera.height, camera.fx, camera.fy, camera.cx, camera.cy,
        bg, settings.near, settings.cutoff_q, settings.min_transmittance, settings.depth_eps)
    frame = FrameRGBD(rgb, depth, trans, valid)
    frame.cache = _Cache(_cloud_key(cloud, camera, bg, settings), name, mu, ta, tb, scales,
                         alpha, colors, sh_aux, hit_off, hit_idx, bg, settings)
    return frame


def render_backward(cloud: SplatCloud, camera: Camera, frame: FrameRGBD, d_rgb,
                    d_depth=None, d_trans=None, backend: Optional[str] = None) -> SplatGradients:
    """Gradients of a pixel loss w.r.t. every disk parameter.

    Args:
        frame: output of :func:`render` for the same cloud and camera.
        d_rgb: dL/d(rendered rgb), (H, W, 3).
        d_depth: dL/d(rendered depth), (H, W); optional.
        d_trans: dL/d(transmittance), (H, W); optional.

    Raises:
        StaleForward: ``frame`` has no cache or was rendered from a
            different cloud state or camera.
    """
    cache = frame.cache
    if not isinstance(cache, _Cache):
        raise StaleForward("frame has no forward cache; call render() first")
    if cache.key != _cloud_key(cloud, camera, cache.background, cache.settings):
        raise StaleForward("forward cache does not match this cloud/camera")
    name, kern = _backend.get(backend or cache.backend)
    h, w = camera.height, camera.width
    zeros = np.zeros((h, w))
    d_rgb = np.ascontiguousarray(d_rgb, dtype=np.float64).reshape(h, w, 3)
    d_depth = zeros if d_depth is None else np.ascontiguousarray(d_depth, dtype=np.float64)
    d_trans = zeros if d_trans is None else np.ascontiguousarray(d_trans, dtype=np.float64)
    g_mu, g_ta, g_tb, g_ls, g_alpha, g_color, contrib = kern.backward(
        cache.mu, cache.ta, cache.tb, cache.scales, cache.alpha, cache.colors,
        w, h, camera.fx, camera.fy, camera.cx, camera.cy, cache.background,
        cache.settings.depth_eps, cache.hit_off, cache.hit_idx,
        np.ascontiguousarray(frame.depth), np.ascontiguousarray(frame.transmittance),
        d_rgb, d_depth, d_trans)

    r = camera.rotation
    g_sh, g_pos_sh = shm.backward(g_color, cloud.sh, cache.sh_aux)
    g_pos = g_mu @ r + g_pos_sh
    g_tu = g_ta @ r
    g_tv = g_tb @ r
    tu, tv = cloud.tangent_u, cloud.tangent_v
    nrm = np.cross(tu, tv)
    g_rot = np.stack([
        np.sum(g_tv * nrm, axis=1),
        -np.sum(g_tu * nrm, axis=1),
        np.sum(g_tu * tv, axis=1) - np.sum(g_tv * tu, axis=1),
    ], axis=1)
    # center gradient in pixels, converted to NDC (one unit = half the image)
    z = cache.mu[:, 2:3]
    screen = np.linalg.norm(np.concatenate(
        [g_mu[:, :1] * z / camera.fx * (0.5 * w), g_mu[:, 1:2] * z / camera.fy * (0.5 * h)],
        axis=1), axis=1)
    return SplatGradients(g_pos, g_alpha, g_ls, g_rot, g_sh, g_tu, g_tv, screen, contrib)
