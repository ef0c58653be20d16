"""File formats, synthetic scenes, datasets and evaluation."""

from .cameras import read_camera, read_cameras, write_camera, write_cameras
from .dataset import SceneDataset, load_dataset, save_dataset
from .evaluate import run_eval
from .images import read_frame, read_pfm, read_png, write_frame, write_pfm, write_png
from .ply import load_points, load_splats, save_points, save_splats
from .synthetic import (Primitive, RigSpec, SyntheticScene, SyntheticSceneSpec, default_scene_spec,
                        rig_cameras, synth_scene)
