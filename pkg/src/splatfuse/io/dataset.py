"""On-disk scene datasets.

Layout of a dataset directory::

    cameras.json          {"cameras": [...]} in the camera JSON schema
    frames/0000.png       sRGB color per camera
    frames/0000.pfm       depth per camera (0 = no depth)
    points.ply            colored initialization points
    scene.json            optional synthetic scene definition (backs the gt oracle)
    split.json            optional split manifest

Real captures use the same layout; converting calibration output into it is
an external step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..core.camera import Camera
from ..core.frame import FrameRGBD
from ..errors import SchemaViolation
from ..protocol import SplitManifest
from . import cameras as camera_io
from . import images, ply


@dataclass
class SceneDataset:
    cameras: List[Camera]
    frames: List[FrameRGBD]
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    manifest: Optional[SplitManifest] = None
    scene_spec: Optional[object] = None

    def __post_init__(self):
        if len(self.cameras) != len(self.frames):
            raise ValueError(f"{len(self.cameras)} cameras but {len(self.frames)} frames")
        shapes = {f.shape for f in self.frames}
        if len(shapes) > 1:
            raise ValueError("all frames must share one resolution")
        for c, f in zip(self.cameras, self.frames):
            if (c.height, c.width) != f.shape:
                raise ValueError("camera size differs from its frame")

    def __len__(self):
        return len(self.cameras)


def save_dataset(root, ds: SceneDataset, encoding="srgb"):
    root = Path(root)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    camera_io.write_cameras(root / "cameras.json", ds.cameras)
    for i, frame in enumerate(ds.frames):
        images.write_frame(root / "frames" / f"{i:04d}", frame, encoding)
    ply.save_points(root / "points.ply", ds.points, ds.colors)
    if ds.scene_spec is not None:
        (root / "scene.json").write_text(json.dumps(ds.scene_spec.to_dict(), indent=2))
    if ds.manifest is not None:
        ds.manifest.save(root / "split.json")


def load_dataset(root, encoding="srgb") -> SceneDataset:
    from .synthetic import SyntheticSceneSpec

    root = Path(root)
    cam_path = root / "cameras.json"
    if not cam_path.exists():
        raise SchemaViolation(f"{cam_path} not found", "cameras.json")
    cams = camera_io.read_cameras(cam_path)
    frames = [images.read_frame(root / "frames" / f"{i:04d}", encoding) for i in range(len(cams))]
    pts, cols = (ply.load_points(root / "points.ply") if (root / "points.ply").exists()
                 else (np.zeros((0, 3)), np.zeros((0, 3))))
    spec = None
    if (root / "scene.json").exists():
        spec = SyntheticSceneSpec.from_dict(json.loads((root / "scene.json").read_text()))
    manifest = SplitManifest.load(root / "split.json") if (root / "split.json").exists() else None
    return SceneDataset(cams, frames, pts, cols, manifest, spec)
