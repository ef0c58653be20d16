"""Adaptive primitive control: sparsity-aware densification, pruning and
content expansion from restored RGB-D frames.

Gradient statistics accumulate for the lifetime of a disk. A disk becomes a
densification candidate only once it has been seen often enough, so rarely
observed disks under masked training are not split on noisy averages.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core.camera import Camera
from .core.frame import FrameRGBD
from .core.render import SplatGradients
from .core.splats import SplatCloud
from .errors import InvalidDepth, LengthMismatch, ShapeMismatch

log = logging.getLogger(__name__)

NEW_DISK_OPACITY = 0.1
INSERT_STRIDE = 4


@dataclass
class DensifyConfig:
    grad_threshold: float = 2e-3  # NDC units; roughly the top decile on desk-scale images
    min_visibility: int = 3
    interval: int = 100
    prune_opacity: float = 0.005
    split_scale_threshold: float = 0.05
    split_factor: float = 1.6
    max_disks: Optional[int] = 15000

    def __post_init__(self):
        if self.interval < 1 or self.min_visibility < 1 or self.split_factor <= 1:
            raise ValueError("need interval >= 1, min_visibility >= 1 and split_factor > 1")


@dataclass
class ExpansionConfig:
    tau_T: float = 0.5
    tau_D: Optional[float] = None  # None -> 0.1 * scene extent, resolved by the trainer

    def __post_init__(self):
        if not 0 < self.tau_T < 1:
            raise ValueError("tau_T must lie in (0, 1)")
        if self.tau_D is not None and self.tau_D <= 0:
            raise ValueError("tau_D must be positive")


def accumulate_stats(cloud: SplatCloud, grads: SplatGradients) -> None:
    """Add one step's screen-space gradient norms and visibility to the cloud."""
    if len(grads) != len(cloud):
        raise LengthMismatch(f"gradients for {len(grads)} disks, cloud has {len(cloud)}")
    seen = grads.contributed
    cloud.grad_accum[seen] += grads.screen[seen]
    cloud.grad_vec_accum[seen] += grads.position[seen]
    cloud.visibility_count[seen] += 1


def select_candidates(cloud: SplatCloud, cfg: DensifyConfig) -> np.ndarray:
    """Indices with mean screen gradient above threshold and enough visibility."""
    vis = cloud.visibility_count
    mean = cloud.grad_accum / np.maximum(vis, 1)
    return np.flatnonzero((mean > cfg.grad_threshold) & (vis >= cfg.min_visibility))


def densify_apply(cloud: SplatCloud, candidates, cfg: DensifyConfig, rng=None) -> None:
    """Clone small candidates and split large ones, in place.

    Clones are offset by half the disk's largest scale along the descent
    direction of its accumulated positional gradient. Splits replace the
    parent with two children drawn from the parent's Gaussian footprint,
    scales divided by ``split_factor``. Statistics of every affected disk
    (clone sources, clones, children) start from zero, and the new disks get
    zeroed ``extras`` (optimizer state).
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size == 0:
        return
    if cfg.max_disks is not None:
        room = cfg.max_disks - len(cloud)
        if room <= 0:
            return
        # each clone or split adds exactly one disk
        candidates = candidates[:room]
    rng = rng if rng is not None else np.random.default_rng(0)
    scales = cloud.scales[candidates]
    big = scales.max(axis=1) >= cfg.split_scale_threshold
    clone_idx, split_idx = candidates[~big], candidates[big]

    new = []
    if clone_idx.size:
        c = cloud.copy()
        c.select(clone_idx)
        step = -c.grad_vec_accum
        norm = np.linalg.norm(step, axis=1, keepdims=True)
        fallback = c.tangent_u
        direction = np.where(norm > 0, step / np.where(norm > 0, norm, 1.0), fallback)
        c.positions = c.positions + 0.5 * c.scales.max(axis=1, keepdims=True) * direction
        new.append(c)
    if split_idx.size:
        for _ in range(2):
            c = cloud.copy()
            c.select(split_idx)
            s = c.scales
            uv = rng.normal(size=(len(c), 2)) * s
            c.positions = c.positions + uv[:, :1] * c.tangent_u + uv[:, 1:] * c.tangent_v
            c.log_scales = c.log_scales - np.log(cfg.split_factor)
            new.append(c)

    # clone sources restart their statistics; new disks start from zero
    # statistics and zero optimizer state
    cloud.reset_stats(clone_idx)
    keep = np.ones(len(cloud), dtype=bool)
    keep[split_idx] = False
    cloud.select(keep)
    for c in new:
        c.reset_stats()
        c.clear_extras()
        cloud.extend(c)


def prune(cloud: SplatCloud, cfg: DensifyConfig) -> int:
    """Drop disks with opacity below ``prune_opacity``; returns the number removed."""
    keep = cloud.opacities >= cfg.prune_opacity
    removed = int((~keep).sum())
    if removed:
        cloud.select(keep)
    return removed


def unreliable_masks(frame_rendered: FrameRGBD, depth_generated, cfg: ExpansionConfig, tau_D=None):
    """The two predicate masks (low accumulated opacity, depth disagreement).

    The depth predicate also flags pixels whose rendered depth is invalid,
    since no depth comparison is possible there.
    """
    depth_generated = np.asarray(depth_generated, dtype=np.float64)
    if depth_generated.shape != frame_rendered.depth.shape:
        raise ShapeMismatch("generated depth shape differs from the rendered frame")
    tau_D = cfg.tau_D if tau_D is None else tau_D
    if tau_D is None:
        raise ValueError("tau_D is unresolved")
    mask_t = frame_rendered.opacity < cfg.tau_T
    diff = np.abs(frame_rendered.depth - depth_generated)
    mask_d = ~frame_rendered.valid | (frame_rendered.valid & (diff > tau_D))
    return mask_t, mask_d


def detect_unreliable(frame_rendered: FrameRGBD, depth_generated_aligned, cfg: ExpansionConfig,
                      tau_D=None) -> np.ndarray:
    """Pixels where accumulated opacity < tau_T or |D_rendered - D_generated| > tau_D."""
    mask_t, mask_d = unreliable_masks(frame_rendered, depth_generated_aligned, cfg, tau_D)
    return mask_t | mask_d


def stride_pixels(mask, stride=INSERT_STRIDE):
    """Masked pixels on the stride grid, as (ys, xs)."""
    grid = np.zeros_like(mask, dtype=bool)
    grid[::stride, ::stride] = True
    return np.nonzero(mask & grid)


def backproject_insert(cloud: SplatCloud, frame_restored: FrameRGBD, camera: Camera, mask,
                       stride=INSERT_STRIDE, max_new=None) -> int:
    """Append one disk per strided masked pixel of a restored RGB-D frame.

    New disks sit at the back-projected pixel, take the restored color, face
    the camera (normal along the viewing ray), have opacity 0.1 and an
    isotropic scale of ``depth / fx * stride``.

    Returns:
        Number of disks added.

    Raises:
        InvalidDepth: a masked pixel has non-positive or non-finite depth.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != frame_restored.depth.shape:
        raise ShapeMismatch("mask shape differs from the frame")
    ys, xs = stride_pixels(mask, stride)
    if max_new is not None and ys.size > max_new:
        pick = np.linspace(0, ys.size - 1, max_new).round().astype(np.int64)
        ys, xs = ys[pick], xs[pick]
    if ys.size == 0:
        return 0
    depth = frame_restored.depth[ys, xs]
    if np.any(~np.isfinite(depth)) or np.any(depth <= 0):
        raise InvalidDepth("masked pixels must carry positive restored depth")
    rays = np.stack([(xs - camera.cx) / camera.fx, (ys - camera.cy) / camera.fy, np.ones(xs.size)], axis=1)
    pts_cam = rays * depth[:, None]
    pts = camera.camera_to_world(pts_cam)
    view = pts - camera.center
    normals = -view / np.linalg.norm(view, axis=1, keepdims=True)
    colors = frame_restored.rgb[ys, xs]
    scales = depth / camera.fx * stride
    new = SplatCloud.from_points(pts, colors, normals, scales, NEW_DISK_OPACITY, cloud.sh_degree)
    cloud.extend(new)
    return len(new)


__all__ = [
    "DensifyConfig", "ExpansionConfig", "accumulate_stats", "select_candidates", "densify_apply",
    "prune", "unreliable_masks", "detect_unreliable", "backproject_insert",
]
