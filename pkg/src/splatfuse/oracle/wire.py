"""Wire encoding of oracle requests and responses.

A message is a ``multipart/form-data`` body. Part ``meta`` is JSON with the
protocol version, frame count, image size and (requests only) the fragment
cameras. Parts ``rgb_<i>`` are 8-bit PNGs holding linear values, parts
``depth_<i>`` little-endian 32-bit PFMs; requests add ``ref_rgb`` and
``ref_depth`` for the reference view.
"""

from __future__ import annotations

import json
import re
import uuid

from ..core.frame import FrameRGBD
from ..errors import BadResponse, SchemaViolation
from ..io import images
from ..io.cameras import camera_from_dict, camera_to_dict
from .base import OracleRequest, OracleResponse

PROTOCOL = "genfusion-oracle/1"
ENCODING = "linear"


class WireError(ValueError):
    """A multipart body or one of its parts could not be decoded."""


def encode_multipart(parts: dict, boundary=None):
    """Returns (body bytes, content-type header value)."""
    boundary = boundary or uuid.uuid4().hex
    out = []
    for name, (data, ctype) in parts.items():
        out.append(f"--{boundary}\r\n".encode())
        out.append(f'Content-Disposition: form-data; name="{name}"\r\n'.encode())
        out.append(f"Content-Type: {ctype}\r\n\r\n".encode())
        out.append(data)
        out.append(b"\r\n")
    out.append(f"--{boundary}--\r\n".encode())
    return b"".join(out), f"multipart/form-data; boundary={boundary}"


_NAME = re.compile(rb'name="([^"]*)"')


def decode_multipart(body: bytes, content_type: str) -> dict:
    m = re.search(r'boundary="?([^";]+)"?', content_type or "")
    if not content_type or not content_type.startswith("multipart/") or not m:
        raise WireError("expected a multipart body with a boundary")
    delim = b"--" + m.group(1).encode()
    chunks = body.split(delim)
    if len(chunks) < 3 or not chunks[-1].startswith(b"--"):
        raise WireError("multipart body is truncated (no closing boundary)")
    parts = {}
    for chunk in chunks[1:-1]:
        if not chunk.startswith(b"\r\n") or not chunk.endswith(b"\r\n"):
            raise WireError("malformed multipart part framing")
        head, sep, data = chunk[2:-2].partition(b"\r\n\r\n")
        if not sep:
            raise WireError("multipart part has no header terminator")
        name = _NAME.search(head)
        if not name:
            raise WireError("multipart part without a name")
        parts[name.group(1).decode()] = data
    return parts


def _frame_parts(prefix_rgb, prefix_depth, frame):
    depth = frame.depth * frame.valid
    return {prefix_rgb: (images.encode_png(frame.rgb, ENCODING), "image/png"),
            prefix_depth: (images.encode_pfm(depth), "application/x-pfm")}


def _decode_frame(parts, rgb_name, depth_name):
    for n in (rgb_name, depth_name):
        if n not in parts:
            raise WireError(f"missing part {n!r}")
    rgb = images.decode_png(parts[rgb_name], ENCODING)
    depth = images.decode_pfm(parts[depth_name])
    if depth.shape != rgb.shape[:2]:
        raise WireError(f"{depth_name} size {depth.shape} differs from {rgb_name} {rgb.shape[:2]}")
    return FrameRGBD.from_depth(rgb, depth)


def _meta(parts):
    if "meta" not in parts:
        raise WireError("missing part 'meta'")
    try:
        meta = json.loads(parts["meta"])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise WireError(f"meta is not JSON: {exc}") from None
    if not isinstance(meta, dict) or meta.get("protocol") != PROTOCOL:
        raise WireError(f"meta.protocol must be {PROTOCOL!r}")
    for key in ("frame_count", "width", "height"):
        if not isinstance(meta.get(key), int) or meta[key] <= 0:
            raise WireError(f"meta.{key} must be a positive integer")
    return meta


def encode_request(req: OracleRequest):
    h, w = req.reference.shape
    meta = {"protocol": PROTOCOL, "frame_count": len(req.frames), "width": w, "height": h,
            "cameras": [camera_to_dict(c) for c in req.cameras]}
    if req.reference_camera is not None:
        meta["reference_camera"] = camera_to_dict(req.reference_camera)
    parts = {"meta": (json.dumps(meta).encode(), "application/json")}
    for i, f in enumerate(req.frames):
        parts.update(_frame_parts(f"rgb_{i}", f"depth_{i}", f))
    parts.update(_frame_parts("ref_rgb", "ref_depth", req.reference))
    return encode_multipart(parts)


def decode_request(body, content_type) -> OracleRequest:
    parts = decode_multipart(body, content_type)
    meta = _meta(parts)
    n = meta["frame_count"]
    try:
        cams = [camera_from_dict(c) for c in meta.get("cameras", [])]
        ref_cam = camera_from_dict(meta["reference_camera"]) if "reference_camera" in meta else None
    except (SchemaViolation, ValueError) as exc:
        raise WireError(f"bad camera in meta: {exc}") from None
    if len(cams) != n:
        raise WireError(f"meta lists {len(cams)} cameras for {n} frames")
    frames = [_decode_frame(parts, f"rgb_{i}", f"depth_{i}") for i in range(n)]
    ref = _decode_frame(parts, "ref_rgb", "ref_depth")
    for f in frames + [ref]:
        if f.shape != (meta["height"], meta["width"]):
            raise WireError("frame size disagrees with meta width/height")
    req = OracleRequest(frames, cams, ref, ref_cam)
    try:
        req.validate()
    except ValueError as exc:
        raise WireError(str(exc)) from None
    return req


def encode_response(resp: OracleResponse):
    h, w = resp.frames[0].shape
    meta = {"protocol": PROTOCOL, "frame_count": len(resp.frames), "width": w, "height": h}
    parts = {"meta": (json.dumps(meta).encode(), "application/json")}
    for i, f in enumerate(resp.frames):
        parts.update(_frame_parts(f"rgb_{i}", f"depth_{i}", f))
    return encode_multipart(parts)


def decode_response(body, content_type) -> OracleResponse:
    try:
        parts = decode_multipart(body, content_type)
        meta = _meta(parts)
        frames = [_decode_frame(parts, f"rgb_{i}", f"depth_{i}") for i in range(meta["frame_count"])]
    except ValueError as exc:  # WireError and MalformedFile
        raise BadResponse(f"undecodable oracle response: {exc}") from None
    return OracleResponse(frames)
