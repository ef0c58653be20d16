"""PNG color and PFM depth codecs, and paired RGB-D frame files.

Color files hold 8-bit sRGB and are linearized on read. The oracle wire
format uses the ``linear`` encoding instead so that values cross the
transport with a plain 1/255 quantization step. Depth is stored as 32-bit
little-endian PFM with zeros on invalid pixels.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from ..core.frame import FrameRGBD
from ..errors import MalformedFile

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def srgb_encode(linear):
    x = np.clip(linear, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1 / 2.4) - 0.055)


def srgb_decode(encoded):
    x = np.clip(encoded, 0.0, 1.0)
    return np.where(x <= 0.04045, x / 12.92, np.power((x + 0.055) / 1.055, 2.4))


def quantize(values):
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_png(rgb, encoding="srgb") -> bytes:
    rgb = np.asarray(rgb, dtype=np.float64)
    if encoding == "srgb":
        rgb = srgb_encode(rgb)
    elif encoding != "linear":
        raise ValueError(f"unknown encoding {encoding!r}")
    buf = io.BytesIO()
    Image.fromarray(quantize(rgb), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes, encoding="srgb") -> np.ndarray:
    if not data.startswith(PNG_SIGNATURE):
        raise MalformedFile("missing PNG signature", offset=0)
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:  # Pillow raises a zoo of types
        raise MalformedFile(f"corrupt PNG: {exc}", offset=len(PNG_SIGNATURE)) from None
    rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return srgb_decode(rgb) if encoding == "srgb" else rgb


def encode_pfm(depth) -> bytes:
    depth = np.asarray(depth, dtype="<f4")
    if depth.ndim != 2:
        raise ValueError("PFM depth must be a 2-D array")
    h, w = depth.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    # PFM rows run bottom to top
    return header + np.ascontiguousarray(depth[::-1]).tobytes()


def _read_token(data, pos):
    """Next whitespace-delimited token at or after ``pos``; returns (token, start, end)."""
    n = len(data)
    while pos < n and data[pos:pos + 1].isspace():
        pos += 1
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise MalformedFile("truncated PFM header", offset=start)
    return data[start:pos], start, pos


def decode_pfm(data: bytes) -> np.ndarray:
    """Decode a single-channel PFM into float64 (values are exact float32)."""
    magic, _, pos = _read_token(data, 0)
    if magic != b"Pf":
        if magic == b"PF":
            raise MalformedFile("three-channel PFM where depth (Pf) was expected", offset=0)
        raise MalformedFile(f"bad PFM magic {magic[:8]!r}", offset=0)
    fields = []
    for name in ("width", "height", "scale"):
        tok, start, pos = _read_token(data, pos)
        try:
            fields.append(float(tok) if name == "scale" else int(tok))
        except ValueError:
            raise MalformedFile(f"PFM {name} is not a number: {tok[:16]!r}", offset=start) from None
    w, h, scale = fields
    if w <= 0 or h <= 0:
        raise MalformedFile("PFM dimensions must be positive", offset=pos)
    if scale == 0:
        raise MalformedFile("PFM scale must be nonzero", offset=pos)
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise MalformedFile("PFM header must end with a single whitespace byte", offset=pos)
    pos += 1
    need = 4 * w * h
    if len(data) - pos < need:
        raise MalformedFile(f"PFM pixel data truncated: need {need} bytes, have {len(data) - pos}",
                            offset=len(data))
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return arr[::-1].astype(np.float64)


def write_png(path, rgb, encoding="srgb"):
    Path(path).write_bytes(encode_png(rgb, encoding))


def read_png(path, encoding="srgb"):
    return decode_png(Path(path).read_bytes(), encoding)


def write_pfm(path, depth):
    Path(path).write_bytes(encode_pfm(depth))


def read_pfm(path):
    return decode_pfm(Path(path).read_bytes())


def write_frame(prefix, frame: FrameRGBD, encoding="srgb"):
    """Write ``<prefix>.png`` and ``<prefix>.pfm``."""
    prefix = Path(prefix)
    write_png(prefix.with_suffix(".png"), frame.rgb, encoding)
    write_pfm(prefix.with_suffix(".pfm"), np.where(frame.valid, frame.depth, 0.0))


def read_frame(prefix, encoding="srgb") -> FrameRGBD:
    prefix = Path(prefix)
    rgb = read_png(prefix.with_suffix(".png"), encoding)
    depth_path = prefix.with_suffix(".pfm")
    depth = read_pfm(depth_path) if depth_path.exists() else np.zeros(rgb.shape[:2])
    if depth.shape != rgb.shape[:2]:
        raise MalformedFile(f"{depth_path.name} size {depth.shape} differs from color {rgb.shape[:2]}")
    return FrameRGBD.from_depth(rgb, depth)
