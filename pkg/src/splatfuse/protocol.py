"""Masked-reconstruction protocols.

Two uses share one primitive, a quarter-area window (ceil(H/2) x ceil(W/2)):

* data generation keeps one fixed corner window (top-left or bottom-right,
  drawn once per scene) on every uniformly downsampled training frame;
* evaluation keeps a window that moves along a smooth seeded path over the
  training frames and tests on the held-out frames at full field of view.

Pixels outside the window are excluded from the loss, not treated as black.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .errors import RatioUnsupported

CORNERS = ("TL", "TR", "BL", "BR")
DATAGEN_CORNERS = ("TL", "BR")
EVAL_RATIOS = (Fraction(1, 2), Fraction(1, 4))
DATAGEN_RATIOS = (Fraction(1), Fraction(1, 2), Fraction(1, 4))


def window_size(width, height):
    return math.ceil(width / 2), math.ceil(height / 2)


@dataclass(frozen=True)
class MaskWindow:
    x0: int
    y0: int
    width: int
    height: int

    def to_mask(self, width, height):
        mask = np.zeros((height, width), dtype=bool)
        mask[self.y0:self.y0 + self.height, self.x0:self.x0 + self.width] = True
        return mask


@dataclass(frozen=True)
class MaskSpec:
    mode: str  # "FIXED_CORNER" or "MOVING"
    corner: Optional[str] = None
    path_seed: int = 0


def corner_window(width, height, corner) -> MaskWindow:
    if corner not in CORNERS:
        raise ValueError(f"corner must be one of {CORNERS}")
    ww, wh = window_size(width, height)
    x0 = 0 if corner in ("TL", "BL") else width - ww
    y0 = 0 if corner in ("TL", "TR") else height - wh
    return MaskWindow(x0, y0, ww, wh)


def quadrant_mask(width, height, corner) -> np.ndarray:
    """Boolean (H, W) keep-mask: True on the chosen corner window only."""
    if width < 2 or height < 2:
        raise ValueError("width and height must be at least 2")
    return corner_window(width, height, corner).to_mask(width, height)


def moving_window(index, num_frames, width, height, path_seed) -> MaskWindow:
    """Window for frame ``index`` on the seeded sinusoidal path.

    The top-left corner traces one full period over the sequence in x and in
    y, with the y phase a quarter period behind x so the window circles all
    four corners. The starting phase comes from ``path_seed``.
    """
    ww, wh = window_size(width, height)
    phase = np.random.default_rng(path_seed).uniform(0.0, 2.0 * math.pi)
    theta = 2.0 * math.pi * index / max(num_frames, 1) + phase
    x0 = round((width - ww) * 0.5 * (1.0 + math.sin(theta)))
    y0 = round((height - wh) * 0.5 * (1.0 + math.cos(theta)))
    x0 = min(max(x0, 0), width - ww)
    y0 = min(max(y0, 0), height - wh)
    return MaskWindow(x0, y0, ww, wh)


# --- manifests ------------------------------------------------------------

@dataclass
class FrameRole:
    index: int
    role: str  # "train" or "test"
    window: Optional[MaskWindow] = None


@dataclass
class SplitManifest:
    """Per-frame role and keep window; serialized as the split manifest JSON."""

    mode: str
    ratio: str
    seed: int
    width: int
    height: int
    frames: List[FrameRole] = field(default_factory=list)
    corner: Optional[str] = None

    @property
    def train_indices(self):
        return [f.index for f in self.frames if f.role == "train"]

    @property
    def test_indices(self):
        return [f.index for f in self.frames if f.role == "test"]

    def window(self, index) -> Optional[MaskWindow]:
        for f in self.frames:
            if f.index == index:
                return f.window
        raise KeyError(index)

    def keep_mask(self, index):
        win = self.window(index)
        if win is None:
            return np.ones((self.height, self.width), dtype=bool)
        return win.to_mask(self.width, self.height)

    def to_dict(self):
        d = asdict(self)
        for f in d["frames"]:
            if f["window"] is None:
                del f["window"]
        return d

    @classmethod
    def from_dict(cls, d):
        frames = [FrameRole(f["index"], f["role"], MaskWindow(**f["window"]) if f.get("window") else None)
                  for f in d["frames"]]
        return cls(d["mode"], d["ratio"], int(d["seed"]), int(d["width"]), int(d["height"]),
                   frames, d.get("corner"))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _as_ratio(ratio, allowed):
    r = Fraction(ratio).limit_denominator(64)
    if r not in allowed:
        raise RatioUnsupported(f"ratio {ratio} not in {[str(a) for a in allowed]}")
    return r


def stride_indices(num_frames, ratio):
    step = int(1 / _as_ratio(ratio, DATAGEN_RATIOS + EVAL_RATIOS))
    return list(range(0, num_frames, step))


def datagen_manifest(num_frames, width, height, ratio=0.25, seed=0, corners=DATAGEN_CORNERS):
    r = _as_ratio(ratio, DATAGEN_RATIOS)
    corner = corners[int(np.random.default_rng(seed).integers(len(corners)))]
    win = corner_window(width, height, corner)
    train = set(stride_indices(num_frames, r))
    frames = [FrameRole(i, "train", win) for i in sorted(train)]
    return SplitManifest("FIXED_CORNER", str(r), seed, width, height, frames, corner)


def eval_manifest(num_frames, width, height, ratio=0.25, seed=0):
    r = _as_ratio(ratio, EVAL_RATIOS)
    train = set(stride_indices(num_frames, r))
    frames = []
    for i in range(num_frames):
        if i in train:
            frames.append(FrameRole(i, "train", moving_window(i, num_frames, width, height, seed)))
        else:
            frames.append(FrameRole(i, "test"))
    return SplitManifest("MOVING", str(r), seed, width, height, frames)


# --- frame-level splits ---------------------------------------------------

@dataclass
class MaskedFrame:
    index: int
    frame: object
    keep: np.ndarray


def _check_frames(frames: Sequence):
    if len(frames) == 0:
        raise ValueError("frame sequence is empty")
    return frames[0].height, frames[0].width


def datagen_split(frames: Sequence, ratio=0.25, seed=0):
    """Masked training frames plus the full sequence as targets.

    Returns:
        (train: list[MaskedFrame], targets: list of all frames, manifest)
    """
    h, w = _check_frames(frames)
    manifest = datagen_manifest(len(frames), w, h, ratio, seed)
    train = [MaskedFrame(i, frames[i], manifest.keep_mask(i)) for i in manifest.train_indices]
    return train, list(frames), manifest


def eval_split(frames: Sequence, ratio, path_seed=0):
    """Moving-mask training frames and held-out full-view test frames.

    Returns:
        (train: list[MaskedFrame], test: list of (index, frame), manifest)
    """
    h, w = _check_frames(frames)
    manifest = eval_manifest(len(frames), w, h, ratio, path_seed)
    train = [MaskedFrame(i, frames[i], manifest.keep_mask(i)) for i in manifest.train_indices]
    test = [(i, frames[i]) for i in manifest.test_indices]
    return train, test, manifest
