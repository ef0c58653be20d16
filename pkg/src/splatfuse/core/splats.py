"""Scene representation: planar Gaussian disks stored as a struct of arrays."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import sh as shm


@dataclass
class GaussianDisk:
    """A single planar Gaussian disk.

    ``sh_coeffs`` has shape (K, 3); row 0 is the base linear RGB color.
    """

    position: np.ndarray
    opacity: float
    tangent_u: np.ndarray
    tangent_v: np.ndarray
    scale_u: float
    scale_v: float
    sh_coeffs: np.ndarray = field(default_factory=lambda: np.full((1, 3), 0.5))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.tangent_u = np.asarray(self.tangent_u, dtype=np.float64).reshape(3)
        self.tangent_v = np.asarray(self.tangent_v, dtype=np.float64).reshape(3)
        self.sh_coeffs = np.asarray(self.sh_coeffs, dtype=np.float64).reshape(-1, 3)
        if self.scale_u <= 0 or self.scale_v <= 0:
            raise ValueError("disk scales must be positive")

    @property
    def normal(self):
        return np.cross(self.tangent_u, self.tangent_v)

    @property
    def color(self):
        return self.sh_coeffs[0]


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def orthonormal_tangents(normals):
    """Two unit tangent vectors spanning the plane perpendicular to each normal."""
    normals = _unit(np.atleast_2d(np.asarray(normals, dtype=np.float64)))
    helper = np.where(np.abs(normals[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    tu = _unit(np.cross(helper, normals))
    tv = np.cross(normals, tu)
    return tu, tv


def rotate_vectors(vectors, axes):
    """Rotate each row of ``vectors`` by the axis-angle row of ``axes`` (Rodrigues)."""
    theta = np.linalg.norm(axes, axis=-1, keepdims=True)
    safe = np.where(theta > 0, theta, 1.0)
    k = axes / safe
    cos, sin = np.cos(theta), np.sin(theta)
    kv = np.sum(k * vectors, axis=-1, keepdims=True)
    out = vectors * cos + np.cross(k, vectors) * sin + k * kv * (1 - cos)
    return np.where(theta > 0, out, vectors)


class SplatCloud:
    """An ordered set of Gaussian disks plus per-disk training statistics.

    Parameter arrays:
        positions (N, 3), opacities (N,), tangent_u (N, 3), tangent_v (N, 3),
        log_scales (N, 2), sh (N, K, 3).

    Statistics:
        grad_accum (N,): running sum of screen-space positional gradient norms.
        visibility_count (N,): number of steps in which the disk hit a pixel.
        grad_vec_accum (N, 3): running sum of world-space positional gradients,
            used for the clone offset direction.

    ``extras`` maps names to further per-disk arrays (first axis N), such as
    optimizer moments; they follow every structural edit and are zero-filled
    for appended disks that lack them.

    Statistics are only zeroed by :meth:`reset_stats`. ``version`` increases
    on every mutation made through this class so stale forward caches can be
    detected.
    """

    def __init__(self, positions=None, opacities=None, tangent_u=None, tangent_v=None,
                 log_scales=None, sh=None, sh_degree=0):
        n = 0 if positions is None else len(positions)
        k = shm.num_coeffs(sh_degree) if sh is None else np.asarray(sh).shape[1]

        def arr(x, shape):
            if x is None:
                return np.zeros(shape)
            return np.array(x, dtype=np.float64).reshape(shape)

        self.positions = arr(positions, (n, 3))
        self.opacities = arr(opacities, (n,))
        self.tangent_u = arr(tangent_u, (n, 3))
        self.tangent_v = arr(tangent_v, (n, 3))
        self.log_scales = arr(log_scales, (n, 2))
        self.sh = arr(sh, (n, k, 3))
        self.grad_accum = np.zeros(n)
        self.visibility_count = np.zeros(n, dtype=np.int64)
        self.grad_vec_accum = np.zeros((n, 3))
        self.extras = {}
        self.version = 0

    # construction ------------------------------------------------------
    @classmethod
    def empty(cls, sh_degree=0) -> "SplatCloud":
        return cls(sh_degree=sh_degree)

    @classmethod
    def from_disks(cls, disks: Sequence[GaussianDisk]) -> "SplatCloud":
        if not disks:
            return cls.empty()
        return cls(
            positions=[d.position for d in disks],
            opacities=[d.opacity for d in disks],
            tangent_u=[d.tangent_u for d in disks],
            tangent_v=[d.tangent_v for d in disks],
            log_scales=[(np.log(d.scale_u), np.log(d.scale_v)) for d in disks],
            sh=np.stack([d.sh_coeffs for d in disks]),
        )

    @classmethod
    def from_points(cls, positions, colors, normals, scales, opacity=0.1, sh_degree=0):
        """Isotropic disks at ``positions`` facing ``normals``."""
        positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
        n = len(positions)
        tu, tv = orthonormal_tangents(normals) if n else (np.zeros((0, 3)),) * 2
        scales = np.broadcast_to(np.asarray(scales, dtype=np.float64), (n,))
        sh = np.zeros((n, shm.num_coeffs(sh_degree), 3))
        sh[:, 0, :] = np.asarray(colors).reshape(n, 3)
        return cls(positions, np.full(n, float(opacity)), tu, tv,
                   np.stack([np.log(scales)] * 2, axis=1), sh)

    # container protocol -----------------------------------------------
    def __len__(self):
        return self.positions.shape[0]

    def __getitem__(self, i) -> GaussianDisk:
        s = np.exp(self.log_scales[i])
        return GaussianDisk(self.positions[i].copy(), float(self.opacities[i]),
                            self.tangent_u[i].copy(), self.tangent_v[i].copy(),
                            float(s[0]), float(s[1]), self.sh[i].copy())

    def __iter__(self) -> Iterable[GaussianDisk]:
        return (self[i] for i in range(len(self)))

    @property
    def sh_degree(self):
        return shm.degree_from_coeffs(self.sh.shape[1])

    @property
    def scales(self):
        return np.exp(self.log_scales)

    @property
    def normals(self):
        return np.cross(self.tangent_u, self.tangent_v)

    _PARAMS = ("positions", "opacities", "tangent_u", "tangent_v", "log_scales", "sh")
    _STATS = ("grad_accum", "visibility_count", "grad_vec_accum")

    def copy(self) -> "SplatCloud":
        out = SplatCloud.empty(self.sh_degree)
        for name in self._PARAMS + self._STATS:
            setattr(out, name, getattr(self, name).copy())
        out.extras = {k: v.copy() for k, v in self.extras.items()}
        out.version = self.version
        return out

    def touch(self):
        self.version += 1

    # structural edits ---------------------------------------------------
    def select(self, index) -> None:
        """Keep only the disks at ``index`` (boolean mask or integer array), in order."""
        for name in self._PARAMS + self._STATS:
            setattr(self, name, getattr(self, name)[index])
        self.extras = {k: v[index] for k, v in self.extras.items()}
        self.touch()

    def extend(self, other: "SplatCloud") -> None:
        """Append all disks of ``other`` (its statistics come along)."""
        if other.sh.shape[1] != self.sh.shape[1]:
            raise ValueError("SH degree mismatch")
        for name in self._PARAMS + self._STATS:
            setattr(self, name, np.concatenate([getattr(self, name), getattr(other, name)]))
        n_new = len(other)
        for k, v in self.extras.items():
            tail = other.extras.get(k)
            if tail is None:
                tail = np.zeros((n_new,) + v.shape[1:], dtype=v.dtype)
            self.extras[k] = np.concatenate([v, tail])
        self.touch()

    def reset_stats(self, index=None) -> None:
        if index is None:
            index = slice(None)
        self.grad_accum[index] = 0.0
        self.visibility_count[index] = 0
        self.grad_vec_accum[index] = 0.0
        self.touch()

    def clear_extras(self, index=None) -> None:
        if index is None:
            index = slice(None)
        for v in self.extras.values():
            v[index] = 0
        self.touch()

    def normalize_tangents(self) -> None:
        """Re-orthonormalize each tangent frame (Gram-Schmidt, t_u first)."""
        tu = _unit(self.tangent_u)
        tv = self.tangent_v - np.sum(self.tangent_v * tu, axis=1, keepdims=True) * tu
        self.tangent_u = tu
        self.tangent_v = _unit(tv)
        self.touch()

    def rotate_tangents(self, omega) -> None:
        """Rotate each tangent frame by local angles (about t_u, t_v, normal)."""
        omega = np.asarray(omega, dtype=np.float64).reshape(-1, 3)
        axes = (omega[:, [0]] * self.tangent_u + omega[:, [1]] * self.tangent_v
                + omega[:, [2]] * self.normals)
        self.tangent_u = rotate_vectors(self.tangent_u, axes)
        self.tangent_v = rotate_vectors(self.tangent_v, axes)
        self.normalize_tangents()

    def colors(self, cam_center):
        return shm.evaluate(self.sh, self.positions, np.asarray(cam_center, dtype=np.float64))[0]
