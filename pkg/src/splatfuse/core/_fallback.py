"""Vectorized numpy rasterizer kernels.

Same contract as the compiled ``_kernels`` module: identical hit rule,
identical per-pixel ordering (intersection depth, then disk index) and the
same compact cache of composited hits, so either backend can run the
backward pass of the other's forward pass.
"""

import numpy as np

PARALLEL_EPS = 1e-9


def _pairs(bbox):
    x0, y0, x1, y1 = (bbox[:, i].astype(np.int64) for i in range(4))
    wx = np.maximum(x1 - x0 + 1, 0)
    wy = np.maximum(y1 - y0 + 1, 0)
    cnt = wx * wy
    disk = np.repeat(np.arange(len(bbox)), cnt)
    starts = np.cumsum(cnt) - cnt
    local = np.arange(int(cnt.sum())) - starts[disk]
    return disk, x0[disk] + local % wx[disk], y0[disk] + local // wx[disk]


def _geometry(mu, ta, tb, rx, ry):
    r = np.stack([rx, ry, np.ones_like(rx)], axis=-1)
    n = np.cross(ta, tb)
    nr = np.sum(n * r, axis=-1)
    nm = np.sum(n * mu, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = nm / nr
    x = lam[:, None] * r - mu
    u = np.sum(ta * x, axis=-1)
    v = np.sum(tb * x, axis=-1)
    return r, n, nr, lam, x, u, v


def _pad(row, rank, values, shape, fill=0.0):
    out = np.full(shape + values.shape[1:], fill, dtype=values.dtype)
    out[row, rank] = values
    return out


def forward(mu, ta, tb, scale, alpha, color, bbox, width, height, fx, fy, cx, cy,
            bg, near, cutoff_q, t_min, acc_eps):
    npix = width * height
    bg = np.asarray(bg, dtype=np.float64)
    rgb = np.tile(bg, (npix, 1))
    depth = np.zeros(npix)
    trans = np.ones(npix)
    valid = np.zeros(npix, dtype=bool)
    hit_off = np.zeros(npix + 1, dtype=np.int64)

    disk, px, py = _pairs(bbox)
    if disk.size:
        rx = (px - cx) / fx
        ry = (py - cy) / fy
        _, _, nr, lam, _, u, v = _geometry(mu[disk], ta[disk], tb[disk], rx, ry)
        s = scale[disk]
        with np.errstate(divide="ignore", invalid="ignore"):
            q = (u / s[:, 0]) ** 2 + (v / s[:, 1]) ** 2
            ok = (np.abs(nr) >= PARALLEL_EPS) & (lam > near) & (q <= cutoff_q)
        disk, pix, lam, q = disk[ok], (py * width + px)[ok], lam[ok], q[ok]
    else:
        pix = lam = q = np.zeros(0)
    if disk.size == 0:
        return (rgb.reshape(height, width, 3), depth.reshape(height, width),
                trans.reshape(height, width), valid.reshape(height, width),
                hit_off, np.zeros(0, dtype=np.int32))

    order = np.lexsort((disk, lam, pix))
    disk, pix, lam, q = disk[order], pix[order], lam[order], q[order]
    g = np.exp(-0.5 * q)
    counts = np.bincount(pix, minlength=npix)
    starts = np.cumsum(counts) - counts
    rank = np.arange(disk.size) - starts[pix]
    upix, row = np.unique(pix, return_inverse=True)
    shape = (upix.size, int(rank.max()) + 1)

    a = _pad(row, rank, alpha[disk] * g, shape)
    present = _pad(row, rank, np.ones(disk.size, dtype=bool), shape, False)
    t_after = np.cumprod(1.0 - a, axis=1)
    t_before = np.concatenate([np.ones((shape[0], 1)), t_after[:, :-1]], axis=1)
    inc = present & (t_before >= t_min)
    a_inc = np.where(inc, a, 0.0)
    w = a_inc * t_before
    c_pad = _pad(row, rank, color[disk], shape)
    d_pad = _pad(row, rank, lam, shape)

    t_end = np.prod(1.0 - a_inc, axis=1)
    acc = 1.0 - t_end
    rgb[upix] = np.einsum("pk,pkc->pc", w, c_pad) + bg * t_end[:, None]
    trans[upix] = t_end
    good = acc > acc_eps
    dnum = np.sum(w * d_pad, axis=1)
    depth[upix[good]] = dnum[good] / acc[good]
    valid[upix[good]] = True

    keep = inc[row, rank]
    hit_idx = disk[keep].astype(np.int32)
    hit_off[1:] = np.cumsum(np.bincount(pix[keep], minlength=npix))
    return (rgb.reshape(height, width, 3), depth.reshape(height, width),
            trans.reshape(height, width), valid.reshape(height, width), hit_off, hit_idx)


def backward(mu, ta, tb, scale, alpha, color, width, height, fx, fy, cx, cy, bg,
             acc_eps, hit_off, hit_idx, depth_img, trans_img, g_rgb, g_depth, g_trans):
    n_disks = mu.shape[0]
    npix = width * height
    out_mu = np.zeros((n_disks, 3))
    out_ta = np.zeros((n_disks, 3))
    out_tb = np.zeros((n_disks, 3))
    out_ls = np.zeros((n_disks, 2))
    out_alpha = np.zeros(n_disks)
    out_color = np.zeros((n_disks, 3))
    contrib = np.zeros(n_disks, dtype=bool)
    if hit_idx.size == 0:
        return out_mu, out_ta, out_tb, out_ls, out_alpha, out_color, contrib

    counts = np.diff(hit_off)
    pix = np.repeat(np.arange(npix), counts)
    disk = hit_idx.astype(np.int64)
    rank = np.arange(disk.size) - hit_off[pix]
    px = pix % width
    py = pix // width
    r, n, nr, lam, x, u, v = _geometry(mu[disk], ta[disk], tb[disk], (px - cx) / fx, (py - cy) / fy)
    s = scale[disk]
    su2, sv2 = s[:, 0] ** 2, s[:, 1] ** 2
    g = np.exp(-0.5 * (u * u / su2 + v * v / sv2))

    upix, row = np.unique(pix, return_inverse=True)
    shape = (upix.size, int(rank.max()) + 1)
    a = _pad(row, rank, alpha[disk] * g, shape)
    c_pad = _pad(row, rank, color[disk], shape)
    d_pad = _pad(row, rank, lam, shape)
    t_before = np.concatenate(
        [np.ones((shape[0], 1)), np.cumprod(1.0 - a, axis=1)[:, :-1]], axis=1)

    g_c = g_rgb.reshape(npix, 3)[upix]
    d_img = depth_img.reshape(npix)[upix]
    acc = 1.0 - trans_img.reshape(npix)[upix]
    good = acc > acc_eps
    safe = np.where(good, acc, 1.0)
    g_d = g_depth.reshape(npix)[upix]
    g_dnum = np.where(good, g_d / safe, 0.0)
    g_tt = g_trans.reshape(npix)[upix] + np.where(good, g_d * d_img / safe, 0.0)

    rc = np.tile(np.asarray(bg, dtype=np.float64), (shape[0], 1))
    rd = np.zeros(shape[0])
    rt = np.ones(shape[0])
    g_a = np.zeros(shape)
    for j in range(shape[1] - 1, -1, -1):
        aj = a[:, j]
        cj = c_pad[:, j]
        dj = d_pad[:, j]
        g_a[:, j] = t_before[:, j] * (np.sum(g_c * (cj - rc), axis=1)
                                      + g_dnum * (dj - rd) - g_tt * rt)
        rc = cj * aj[:, None] + (1.0 - aj)[:, None] * rc
        rd = dj * aj + (1.0 - aj) * rd
        rt = (1.0 - aj) * rt

    ga = g_a[row, rank]
    wh = a[row, rank] * t_before[row, rank]

    def scatter(values):
        if values.ndim == 1:
            return np.bincount(disk, weights=values, minlength=n_disks)
        return np.stack([np.bincount(disk, weights=values[:, c], minlength=n_disks)
                         for c in range(values.shape[1])], axis=1)

    out_color = scatter(wh[:, None] * g_c[row])
    g_lam = wh * g_dnum[row]
    al = alpha[disk]
    out_alpha = scatter(ga * g)
    gg = ga * al
    gu = -gg * g * u / su2
    gv = -gg * g * v / sv2
    out_ls = scatter(np.stack([gg * g * u * u / su2, gg * g * v * v / sv2], axis=1))
    tah, tbh = ta[disk], tb[disk]
    lam_tot = g_lam + gu * np.sum(tah * r, axis=1) + gv * np.sum(tbh * r, axis=1)
    out_mu = scatter(-gu[:, None] * tah - gv[:, None] * tbh + (lam_tot / nr)[:, None] * n)
    gn = -(lam_tot / nr)[:, None] * x
    out_ta = scatter(gu[:, None] * x + np.cross(tbh, gn))
    out_tb = scatter(gv[:, None] * x + np.cross(gn, tah))
    contrib = np.bincount(disk, minlength=n_disks) > 0
    return out_mu, out_ta, out_tb, out_ls, out_alpha, out_color, contrib
