"""Gaussian-disk scene representation and differentiable renderer."""

from .camera import Camera, look_at
from .frame import FrameRGBD
from .render import (
    DEFAULT_SETTINGS,
    Footprint,
    RasterSettings,
    SplatGradients,
    eval_splat_at_pixel,
    project_splat,
    render,
    render_backward,
)
from .splats import GaussianDisk, SplatCloud

__all__ = [
    "Camera", "look_at", "FrameRGBD", "GaussianDisk", "SplatCloud", "RasterSettings",
    "DEFAULT_SETTINGS", "Footprint", "SplatGradients", "project_splat",
    "eval_splat_at_pixel", "render", "render_backward",
]
