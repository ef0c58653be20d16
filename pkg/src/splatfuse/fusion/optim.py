"""Adam over the splat parameter groups.

Moments live in ``cloud.extras`` so they are reindexed by every structural
edit (select, extend) together with the disks themselves. Opacity is
optimized on its logit and tangent frames by small local rotations.
"""

from __future__ import annotations

import math

import numpy as np

from ..core.render import SplatGradients
from ..core.splats import SplatCloud, rotate_vectors

OPACITY_EPS = 1e-6


def _logit(a):
    a = np.clip(a, OPACITY_EPS, 1 - OPACITY_EPS)
    return np.log(a) - np.log1p(-a)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class Adam:
    groups = ("position", "opacity", "scale", "rotation", "sh")

    def __init__(self, lrs: dict, betas=(0.9, 0.999), eps=1e-15):
        self.lrs = dict(lrs)
        self.b1, self.b2 = betas
        self.eps = eps

    def _update(self, cloud, name, grad, idx, t):
        n = len(cloud)
        m = cloud.extras.setdefault(f"adam_m_{name}", np.zeros((n,) + grad.shape[1:]))
        v = cloud.extras.setdefault(f"adam_v_{name}", np.zeros((n,) + grad.shape[1:]))
        mi = self.b1 * m[idx] + (1 - self.b1) * grad
        vi = self.b2 * v[idx] + (1 - self.b2) * grad * grad
        m[idx] = mi
        v[idx] = vi
        t = t.reshape((-1,) + (1,) * (grad.ndim - 1))
        mhat = mi / (1 - self.b1 ** t)
        vhat = vi / (1 - self.b2 ** t)
        return -self.lrs[name] * mhat / (np.sqrt(vhat) + self.eps)

    def step(self, cloud: SplatCloud, grads: SplatGradients, active=None) -> None:
        """One update of the disks in ``active`` (default: those that hit a pixel).

        Each disk keeps its own step counter, so bias correction is right for
        disks appended mid-training.
        """
        n = len(cloud)
        if n == 0:
            return
        steps = cloud.extras.setdefault("adam_t", np.zeros(n))
        idx = np.flatnonzero(grads.contributed if active is None else active)
        if idx.size == 0:
            return
        steps[idx] += 1
        t = steps[idx]
        alpha = np.clip(cloud.opacities[idx], OPACITY_EPS, 1 - OPACITY_EPS)
        d_logit = grads.opacity[idx] * alpha * (1 - alpha)
        cloud.positions[idx] += self._update(cloud, "position", grads.position[idx], idx, t)
        cloud.opacities[idx] = _sigmoid(_logit(alpha) + self._update(cloud, "opacity", d_logit, idx, t))
        cloud.log_scales[idx] += self._update(cloud, "scale", grads.log_scale[idx], idx, t)
        cloud.sh[idx] += self._update(cloud, "sh", grads.sh[idx], idx, t)
        omega = self._update(cloud, "rotation", grads.rotation[idx], idx, t)
        sub_u, sub_v = cloud.tangent_u[idx], cloud.tangent_v[idx]
        nrm = np.cross(sub_u, sub_v)
        axes = omega[:, :1] * sub_u + omega[:, 1:2] * sub_v + omega[:, 2:] * nrm
        tu, tv = rotate_vectors(sub_u, axes), rotate_vectors(sub_v, axes)
        tu /= np.linalg.norm(tu, axis=1, keepdims=True)
        tv -= np.sum(tv * tu, axis=1, keepdims=True) * tu
        tv /= np.linalg.norm(tv, axis=1, keepdims=True)
        cloud.tangent_u[idx] = tu
        cloud.tangent_v[idx] = tv
        cloud.touch()


def position_lr(k, total, lr_init, lr_final):
    """Log-linear decay from ``lr_init`` at 0 to ``lr_final`` at ``total``."""
    if total <= 0 or lr_init <= 0 or lr_final <= 0:
        return lr_init
    f = min(max(k / total, 0.0), 1.0)
    return math.exp((1 - f) * math.log(lr_init) + f * math.log(lr_final))
