"""PLY vertex files for splat clouds and colored point sets.

Splat files carry one vertex per disk with the properties
``x y z opacity tu_x tu_y tu_z tv_x tv_y tv_z log_su log_sv`` followed by
``sh_<k>_r sh_<k>_g sh_<k>_b`` for every SH coefficient ``k``. Values are
written as doubles (ASCII with round-trip repr, or binary little-endian),
so a save/load cycle is lossless.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..core import sh as shm
from ..core.splats import SplatCloud
from ..errors import MalformedFile, SchemaViolation

PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
BASE_FIELDS = ["x", "y", "z", "opacity", "tu_x", "tu_y", "tu_z", "tv_x", "tv_y", "tv_z",
               "log_su", "log_sv"]


def splat_fields(num_coeffs):
    return BASE_FIELDS + [f"sh_{k}_{c}" for k in range(num_coeffs) for c in "rgb"]


def write_ply(path, columns: dict, binary=True, comments=()):
    """Write a vertex-only PLY with double properties in ``columns`` order."""
    names = list(columns)
    n = len(next(iter(columns.values()))) if names else 0
    table = np.stack([np.asarray(columns[k], dtype=np.float64) for k in names], axis=1) if n else \
        np.zeros((0, len(names)))
    fmt = "binary_little_endian" if binary else "ascii"
    head = ["ply", f"format {fmt} 1.0"] + [f"comment {c}" for c in comments]
    head += [f"element vertex {n}"] + [f"property double {k}" for k in names] + ["end_header"]
    data = ("\n".join(head) + "\n").encode("ascii")
    if binary:
        data += np.ascontiguousarray(table, dtype="<f8").tobytes()
    else:
        data += "".join(" ".join(repr(float(v)) for v in row) + "\n" for row in table).encode("ascii")
    Path(path).write_bytes(data)


def read_ply(path) -> dict:
    """Read the vertex element of a PLY file into float64 columns."""
    data = Path(path).read_bytes()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise MalformedFile("not a PLY file (missing 'ply' magic or end_header)", offset=0)
    body = data.index(b"\n", end) + 1
    fmt, n, props, in_vertex = None, 0, [], False
    offset = 0
    for line in data[:body].split(b"\n"):
        parts = line.decode("ascii", "replace").split()
        if not parts:
            offset += len(line) + 1
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                n = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list" or parts[1] not in PLY_TYPES:
                raise MalformedFile(f"unsupported vertex property type {parts[1]!r}", offset=offset)
            props.append((parts[2], PLY_TYPES[parts[1]]))
        offset += len(line) + 1
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise MalformedFile(f"unsupported PLY format {fmt!r}", offset=0)
    if fmt == "ascii":
        rows = data[body:].split(b"\n")
        rows = [r for r in rows if r.strip()][:n]
        if len(rows) < n:
            raise MalformedFile(f"expected {n} vertices, found {len(rows)}", offset=len(data))
        table = np.array([[float(v) for v in r.split()[:len(props)]] for r in rows]).reshape(n, len(props))
        return {name: table[:, i] for i, (name, _) in enumerate(props)}
    order = "<" if fmt == "binary_little_endian" else ">"
    dtype = np.dtype([(name, order + t) for name, t in props])
    if len(data) - body < dtype.itemsize * n:
        raise MalformedFile("PLY vertex data truncated", offset=len(data))
    rec = np.frombuffer(data, dtype=dtype, count=n, offset=body)
    return {name: rec[name].astype(np.float64) for name, _ in props}


def save_splats(path, cloud: SplatCloud, binary=True):
    k = cloud.sh.shape[1]
    cols = dict(zip(splat_fields(k), np.concatenate([
        cloud.positions, cloud.opacities[:, None], cloud.tangent_u, cloud.tangent_v,
        cloud.log_scales, cloud.sh.reshape(len(cloud), -1)], axis=1).T))
    write_ply(path, cols, binary)


def load_splats(path) -> SplatCloud:
    cols = read_ply(path)
    for name in BASE_FIELDS:
        if name not in cols:
            raise SchemaViolation(f"splat PLY lacks property {name!r}", name)
    k = 0
    while f"sh_{k}_r" in cols:
        k += 1
    if k == 0:
        raise SchemaViolation("splat PLY lacks property 'sh_0_r'", "sh_0_r")
    shm.degree_from_coeffs(k)
    g = lambda *names: np.stack([cols[n] for n in names], axis=1)
    sh = g(*[f"sh_{i}_{c}" for i in range(k) for c in "rgb"]).reshape(-1, k, 3)
    return SplatCloud(g("x", "y", "z"), cols["opacity"], g("tu_x", "tu_y", "tu_z"),
                      g("tv_x", "tv_y", "tv_z"), g("log_su", "log_sv"), sh)


def save_points(path, positions, colors, binary=True):
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    write_ply(path, {"x": positions[:, 0], "y": positions[:, 1], "z": positions[:, 2],
                     "r": colors[:, 0], "g": colors[:, 1], "b": colors[:, 2]}, binary)


def load_points(path):
    """(positions (N, 3), colors (N, 3) in [0, 1]); accepts r/g/b floats or red/green/blue bytes."""
    cols = read_ply(path)
    if not all(k in cols for k in "xyz"):
        raise SchemaViolation("point PLY lacks x/y/z", "x")
    pos = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
    if all(k in cols for k in "rgb"):
        col = np.stack([cols["r"], cols["g"], cols["b"]], axis=1)
    elif all(k in cols for k in ("red", "green", "blue")):
        col = np.stack([cols["red"], cols["green"], cols["blue"]], axis=1) / 255.0
    else:
        col = np.full_like(pos, 0.5)
    return pos, col
