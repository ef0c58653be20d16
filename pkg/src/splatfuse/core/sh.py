"""Real spherical-harmonics color model, degrees 0 to 2.

The degree-0 coefficient is the base linear RGB color itself (its basis
function is the constant 1), so a degree-0 cloud stores colors directly.
Higher bands use the usual real SH basis in the view direction from the
camera center to the disk center.
"""

import numpy as np

C1 = 0.4886025119029199
C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
      -1.0925484305920792, 0.5462742152960396)

MAX_DEGREE = 2


def num_coeffs(degree: int) -> int:
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"SH degree must be in [0, {MAX_DEGREE}], got {degree}")
    return (degree + 1) ** 2


def degree_from_coeffs(k: int) -> int:
    for d in range(MAX_DEGREE + 1):
        if (d + 1) ** 2 == k:
            return d
    raise ValueError(f"{k} is not a valid SH coefficient count")


def basis(dirs, degree):
    """SH basis (N, K) and its Jacobian w.r.t. the unit direction (N, K, 3)."""
    dirs = np.atleast_2d(dirs)
    n = dirs.shape[0]
    k = num_coeffs(degree)
    y = np.zeros((n, k))
    dy = np.zeros((n, k, 3))
    y[:, 0] = 1.0
    if degree >= 1:
        x_, y_, z_ = dirs[:, 0], dirs[:, 1], dirs[:, 2]
        y[:, 1] = -C1 * y_
        y[:, 2] = C1 * z_
        y[:, 3] = -C1 * x_
        dy[:, 1, 1] = -C1
        dy[:, 2, 2] = C1
        dy[:, 3, 0] = -C1
    if degree >= 2:
        y[:, 4] = C2[0] * x_ * y_
        y[:, 5] = C2[1] * y_ * z_
        y[:, 6] = C2[2] * (2 * z_ * z_ - x_ * x_ - y_ * y_)
        y[:, 7] = C2[3] * x_ * z_
        y[:, 8] = C2[4] * (x_ * x_ - y_ * y_)
        dy[:, 4, 0], dy[:, 4, 1] = C2[0] * y_, C2[0] * x_
        dy[:, 5, 1], dy[:, 5, 2] = C2[1] * z_, C2[1] * y_
        dy[:, 6, 0], dy[:, 6, 1], dy[:, 6, 2] = -2 * C2[2] * x_, -2 * C2[2] * y_, 4 * C2[2] * z_
        dy[:, 7, 0], dy[:, 7, 2] = C2[3] * z_, C2[3] * x_
        dy[:, 8, 0], dy[:, 8, 1] = 2 * C2[4] * x_, -2 * C2[4] * y_
    return y, dy


def evaluate(sh, positions, cam_center):
    """Evaluate colors for every disk as seen from ``cam_center``.

    Returns:
        colors: (N, 3) clamped to [0, 1].
        aux: tuple needed by :func:`backward`.
    """
    degree = degree_from_coeffs(sh.shape[1])
    if degree == 0:
        raw = sh[:, 0, :].copy()
        aux = (degree, raw, None, None, None)
    else:
        offs = positions - cam_center
        dist = np.linalg.norm(offs, axis=1, keepdims=True)
        dist = np.maximum(dist, 1e-12)
        dirs = offs / dist
        y, dy = basis(dirs, degree)
        raw = np.einsum("nk,nkc->nc", y, sh)
        aux = (degree, raw, y, dy, (dirs, dist))
    return np.clip(raw, 0.0, 1.0), aux


def backward(d_colors, sh, aux):
    """Map color gradients to SH-coefficient and position gradients."""
    degree, raw, y, dy, geo = aux
    live = (raw > 0.0) & (raw < 1.0)
    g = np.where(live, d_colors, 0.0)
    d_sh = np.zeros_like(sh)
    if degree == 0:
        d_sh[:, 0, :] = g
        return d_sh, np.zeros((sh.shape[0], 3))
    d_sh = np.einsum("nk,nc->nkc", y, g)
    dirs, dist = geo
    # dL/ddir = sum_c g_c * sum_k sh_kc * dY_k/ddir
    d_dir = np.einsum("nc,nkc,nkj->nj", g, sh, dy)
    d_dir -= np.sum(d_dir * dirs, axis=1, keepdims=True) * dirs
    return d_sh, d_dir / dist
