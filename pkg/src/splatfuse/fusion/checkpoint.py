"""Checkpoints: a splat PLY plus a JSON sidecar with the training state.

The sidecar holds the iteration, the per-disk optimizer moments and step
counters, the densification statistics and the supervision manifest.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..io.ply import load_splats, save_splats


def checkpoint_paths(directory, iteration):
    d = Path(directory)
    return d / f"iter_{iteration:06d}.ply", d / f"iter_{iteration:06d}.json"


def save_checkpoint(directory, trainer):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ply_path, meta_path = checkpoint_paths(d, trainer.iteration)
    cloud = trainer.cloud
    save_splats(ply_path, cloud)
    state = {
        "iteration": trainer.iteration,
        "num_disks": len(cloud),
        "optimizer": {k: v.tolist() for k, v in sorted(cloud.extras.items())},
        "stats": {"grad_accum": cloud.grad_accum.tolist(),
                  "visibility_count": cloud.visibility_count.tolist(),
                  "grad_vec_accum": cloud.grad_vec_accum.tolist()},
        "supervision": trainer.supervision.manifest(),
        "config": trainer.config.to_dict(),
    }
    meta_path.write_text(json.dumps(state))
    return ply_path, meta_path


def load_checkpoint(directory, iteration):
    """Returns (cloud with statistics and optimizer state restored, state dict)."""
    ply_path, meta_path = checkpoint_paths(directory, iteration)
    cloud = load_splats(ply_path)
    state = json.loads(meta_path.read_text())
    cloud.extras = {k: np.asarray(v, dtype=np.float64) for k, v in state["optimizer"].items()}
    st = state["stats"]
    cloud.grad_accum = np.asarray(st["grad_accum"], dtype=np.float64)
    cloud.visibility_count = np.asarray(st["visibility_count"], dtype=np.int64)
    cloud.grad_vec_accum = np.asarray(st["grad_vec_accum"], dtype=np.float64).reshape(-1, 3)
    return cloud, state
