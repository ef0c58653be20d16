"""Camera JSON: ``{fx, fy, cx, cy, width, height, R: [9, row-major], t: [3]}``.

Floats are written with Python's shortest round-trip repr, so a write/read
cycle reproduces every value exactly. A file may hold one camera object or
``{"cameras": [...]}``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import List

import numpy as np

from ..core.camera import Camera, check_rotation
from ..errors import SchemaViolation

FIELDS = ("fx", "fy", "cx", "cy", "width", "height", "R", "t")
FILE_ROTATION_TOL = 1e-6


def camera_to_dict(cam: Camera) -> dict:
    return {
        "fx": float(cam.fx), "fy": float(cam.fy), "cx": float(cam.cx), "cy": float(cam.cy),
        "width": int(cam.width), "height": int(cam.height),
        "R": [float(v) for v in cam.rotation.reshape(-1)],
        "t": [float(v) for v in cam.translation],
    }


def _number(d, key):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SchemaViolation(f"field {key!r} must be a finite number", key)
    return v


def camera_from_dict(d) -> Camera:
    if not isinstance(d, dict):
        raise SchemaViolation("camera entry must be a JSON object")
    for key in FIELDS:
        if key not in d:
            raise SchemaViolation(f"missing field {key!r}", key)
    intr = [float(_number(d, k)) for k in ("fx", "fy", "cx", "cy")]
    size = []
    for key in ("width", "height"):
        v = _number(d, key)
        if int(v) != v or v <= 0:
            raise SchemaViolation(f"field {key!r} must be a positive integer", key)
        size.append(int(v))
    for key, n in (("R", 9), ("t", 3)):
        if not isinstance(d[key], list) or len(d[key]) != n:
            raise SchemaViolation(f"field {key!r} must be a list of {n} numbers", key)
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
                   for v in d[key]):
            raise SchemaViolation(f"field {key!r} must hold finite numbers", key)
    rotation = np.array(d["R"], dtype=np.float64).reshape(3, 3)
    check_rotation(rotation, FILE_ROTATION_TOL)
    return Camera(*intr, *size, rotation, np.array(d["t"], dtype=np.float64))


def dumps_cameras(cams) -> str:
    if isinstance(cams, Camera):
        return json.dumps(camera_to_dict(cams), indent=2)
    return json.dumps({"cameras": [camera_to_dict(c) for c in cams]}, indent=2)


def loads_cameras(text) -> List[Camera]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"invalid JSON: {exc}") from None
    if isinstance(data, dict) and "cameras" in data:
        if not isinstance(data["cameras"], list):
            raise SchemaViolation("'cameras' must be a list", "cameras")
        return [camera_from_dict(c) for c in data["cameras"]]
    return [camera_from_dict(data)]


def write_cameras(path, cams):
    Path(path).write_text(dumps_cameras(cams))


def read_cameras(path) -> List[Camera]:
    return loads_cameras(Path(path).read_text())


def write_camera(path, cam: Camera):
    write_cameras(path, cam)


def read_camera(path) -> Camera:
    cams = read_cameras(path)
    if len(cams) != 1:
        raise SchemaViolation(f"expected one camera, found {len(cams)}")
    return cams[0]
