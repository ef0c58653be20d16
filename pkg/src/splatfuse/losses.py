"""Photometric and depth losses, image metrics, and the generation-weight schedule.

Every loss used in training has a ``*_grad`` companion returning the value
and its gradient w.r.t. the first (rendered) argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import EmptyMask, NoSupervision, ShapeMismatch

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
PSNR_SENTINEL = 99.0
LSQ_SINGULAR_EPS = 1e-8


@dataclass
class LossWeights:
    lambda_l1: float = 0.8
    lambda_ssim: float = 0.2
    lambda_mono: float = 0.05

    def __post_init__(self):
        if min(self.lambda_l1, self.lambda_ssim, self.lambda_mono) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class ScheduleConfig:
    k_start: int
    k_end: int

    def __post_init__(self):
        if not self.k_end > self.k_start >= 0:
            raise ValueError("schedule needs k_end > k_start >= 0")


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes {a.shape} and {b.shape} differ")
    return a, b


def _channel_mask(mask, shape):
    if mask is None:
        return np.ones(shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape == shape:
        return mask
    if mask.shape == shape[:2] and len(shape) == 3:
        return np.broadcast_to(mask[..., None], shape)
    raise ShapeMismatch(f"mask shape {mask.shape} does not fit image shape {shape}")


# --- L1 -----------------------------------------------------------------

def l1_loss_grad(a, b, mask=None):
    a, b = _same_shape(a, b)
    m = _channel_mask(mask, a.shape)
    count = int(m.sum())
    if count == 0:
        return 0.0, np.zeros_like(a)
    diff = np.where(m, a - b, 0.0)
    return float(np.abs(diff).sum() / count), np.sign(diff) / count


def l1_loss(a, b, mask=None) -> float:
    """Mean absolute difference over masked pixels and channels (0 for an empty mask)."""
    return l1_loss_grad(a, b, mask)[0]


# --- SSIM ---------------------------------------------------------------

def _gauss_taps():
    r = SSIM_WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-x ** 2 / (2 * SSIM_SIGMA ** 2))
    return w / w.sum()


@lru_cache(maxsize=64)
def _filter_matrix(n):
    """Dense n x n matrix of the 1D Gaussian filter with symmetric padding."""
    taps = _gauss_taps()
    r = len(taps) // 2
    # np.pad 'symmetric' reflects with edge repetition and keeps constants exact
    padded = np.pad(np.eye(n), ((r, r), (0, 0)), mode="symmetric")
    out = np.zeros((n, n))
    for k, w in enumerate(taps):
        out += w * padded[k:k + n]
    out.setflags(write=False)
    return out


def _blur(img, fh, fw):
    # img (H, W, C)
    return np.einsum("ih,hwc,jw->ijc", fh, img, fw, optimize=True)


def _as_hwc(img):
    img = np.asarray(img, dtype=np.float64)
    return img[..., None] if img.ndim == 2 else img


def ssim_grad(a, b, weight=None):
    """Mean SSIM of ``a`` vs ``b`` and its gradient w.r.t. ``a``.

    Args:
        weight: optional (H, W) boolean or float map; the SSIM map is
            averaged with these weights instead of uniformly.
    """
    a, b = _same_shape(a, b)
    squeeze = a.ndim == 2
    x, y = _as_hwc(a), _as_hwc(b)
    h, w, c = x.shape
    fh, fw = _filter_matrix(h), _filter_matrix(w)
    mx, my = _blur(x, fh, fw), _blur(y, fh, fw)
    exx, eyy, exy = _blur(x * x, fh, fw), _blur(y * y, fh, fw), _blur(x * y, fh, fw)
    a1 = 2 * mx * my + SSIM_C1
    a2 = 2 * (exy - mx * my) + SSIM_C2
    b1 = mx * mx + my * my + SSIM_C1
    b2 = (exx - mx * mx) + (eyy - my * my) + SSIM_C2
    smap = (a1 * a2) / (b1 * b2)

    if weight is None:
        wmap = np.full((h, w), 1.0 / (h * w))
    else:
        wmap = np.asarray(weight, dtype=np.float64).reshape(h, w)
        total = wmap.sum()
        if total <= 0:
            return 0.0, np.zeros_like(a)
        wmap = wmap / total
    wmap = wmap[..., None] / c
    value = float(np.sum(smap * wmap))

    da1 = wmap * a2 / (b1 * b2)
    da2 = wmap * a1 / (b1 * b2)
    db1 = -wmap * smap / b1
    db2 = -wmap * smap / b2
    d_mx = da1 * 2 * my - da2 * 2 * my + db1 * 2 * mx - db2 * 2 * mx
    d_exx = db2
    d_exy = 2 * da2
    fh_t, fw_t = fh.T, fw.T
    grad = _blur(d_mx, fh_t, fw_t) + 2 * x * _blur(d_exx, fh_t, fw_t) + y * _blur(d_exy, fh_t, fw_t)
    return value, (grad[..., 0] if squeeze else grad)


def ssim(a, b) -> float:
    """Mean local SSIM (11x11 Gaussian window, sigma 1.5), averaged over channels."""
    return ssim_grad(a, b)[0]


def psnr(a, b) -> float:
    a, b = _same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-12:
        return PSNR_SENTINEL
    return 10.0 * math.log10(1.0 / mse)


# --- scale/shift invariant depth ---------------------------------------

def fit_scale_shift(pred, target):
    """Least-squares (s, t) minimizing sum (s * pred + t - target)^2.

    A tiny ridge is added to the normal equations when they are singular
    (constant ``pred``).
    """
    m = pred.size
    spp, sp = float(pred @ pred), float(pred.sum())
    a = np.array([[spp, sp], [sp, float(m)]])
    det = spp * m - sp * sp
    if det <= 1e-12 * max(spp * m, 1.0):
        a += LSQ_SINGULAR_EPS * np.eye(2)
    rhs = np.array([float(pred @ target), float(target.sum())])
    s, t = np.linalg.solve(a, rhs)
    return s, t, a


def ssi_depth_loss_grad(pred, target, mask=None):
    """Scale/shift-invariant depth loss and its gradient w.r.t. ``pred``.

    The affine fit is differentiated through (adjoint of the 2x2 normal
    equations), so the gradient is exact for the composite function.
    """
    pred, target = _same_shape(pred, target)
    m = np.ones(pred.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != pred.shape:
        raise ShapeMismatch("mask shape differs from depth shape")
    count = int(m.sum())
    if count < 2:
        raise EmptyMask(f"need at least 2 masked pixels, got {count}")
    p, y = pred[m], target[m]
    s, t, a = fit_scale_shift(p, y)
    res = s * p + t - y
    value = float(np.abs(res).mean())
    sg = np.sign(res) / count
    dl_ds, dl_dt = float(sg @ p), float(sg.sum())
    lam_s, lam_t = np.linalg.solve(a.T, np.array([dl_ds, dl_dt]))
    gp = sg * s + lam_s * (y - 2 * p * s - t) - lam_t * s
    grad = np.zeros_like(pred)
    grad[m] = gp
    return value, grad


def ssi_depth_loss(pred, target, mask=None) -> float:
    return ssi_depth_loss_grad(pred, target, mask)[0]


# --- schedule -------------------------------------------------------------

def lambda_schedule(k, cfg: ScheduleConfig) -> float:
    """Sinusoidal warm-up/annealing weight; zero outside [k_start, k_end]."""
    if k < cfg.k_start or k > cfg.k_end:
        return 0.0
    return 1.0 * math.sin((k - cfg.k_start) / (cfg.k_end - cfg.k_start) * math.pi)


# --- combined objective ------------------------------------------------

@dataclass
class LossResult:
    value: float
    d_rgb: np.ndarray
    d_depth: np.ndarray
    terms: dict = field(default_factory=dict)


def weighted_sum(l1, ssim_loss, depth, weights: LossWeights) -> float:
    return weights.lambda_l1 * l1 + weights.lambda_ssim * ssim_loss + weights.lambda_mono * depth


def _mask_bbox(mask):
    ys, xs = np.nonzero(mask)
    return ys.min(), ys.max() + 1, xs.min(), xs.max() + 1


def photometric_terms(rendered, target, weights: LossWeights, mask=None, use_depth=True):
    """L1 + (1 - SSIM) + SSI-depth between a rendered and a target frame.

    With a keep-mask the terms are evaluated on the mask's bounding box, so
    a rectangular mask gives exactly the loss of the cropped frames.

    Returns (value, d_rgb, d_depth, terms).
    """
    h, w = rendered.depth.shape
    d_rgb = np.zeros((h, w, 3))
    d_depth = np.zeros((h, w))
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (h, w) or target.depth.shape != (h, w):
        raise ShapeMismatch("rendered, target and mask shapes differ")
    if not mask.any():
        return 0.0, d_rgb, d_depth, {"l1": 0.0, "ssim": 0.0, "depth": 0.0}
    y0, y1, x0, x1 = _mask_bbox(mask)
    sl = (slice(y0, y1), slice(x0, x1))
    m = mask[sl]
    r_rgb, t_rgb = rendered.rgb[sl], target.rgb[sl]

    l1, g_l1 = l1_loss_grad(r_rgb, t_rgb, m)
    s, g_s = ssim_grad(r_rgb, t_rgb, weight=None if m.all() else m)
    d_rgb[sl] = weights.lambda_l1 * g_l1 - weights.lambda_ssim * g_s
    terms = {"l1": l1, "ssim": 1.0 - s, "depth": 0.0}

    if use_depth and weights.lambda_mono > 0:
        dm = m & rendered.valid[sl] & target.valid[sl]
        if dm.sum() >= 2:
            dl, g_d = ssi_depth_loss_grad(rendered.depth[sl], target.depth[sl], dm)
            terms["depth"] = dl
            d_depth[sl] = weights.lambda_mono * g_d
    value = weighted_sum(terms["l1"], terms["ssim"], terms["depth"], weights)
    return value, d_rgb, d_depth, terms


def total_loss(rendered, input_gt=None, generated=None, weights: Optional[LossWeights] = None,
               lam: float = 0.0, *, input_mask=None, mono_recon=True, mono_gen=True) -> LossResult:
    """``L = L_recon + lam * L_gen`` with gradients w.r.t. rendered rgb and depth.

    Args:
        rendered: FrameRGBD from the renderer.
        input_gt: captured frame at the same camera, or None.
        generated: restored frame at the same camera (depth already
            aligned), or None.
        lam: generation-loss weight.
        input_mask: keep-mask for ``input_gt`` (pixels outside are ignored).
        mono_recon, mono_gen: include the depth term in each part.

    Raises:
        NoSupervision: both ``input_gt`` and ``generated`` are None.
    """
    if input_gt is None and generated is None:
        raise NoSupervision("total_loss needs input_gt or generated")
    weights = weights or LossWeights()
    h, w = rendered.depth.shape
    value = 0.0
    d_rgb = np.zeros((h, w, 3))
    d_depth = np.zeros((h, w))
    terms = {}
    if input_gt is not None:
        v, gr, gd, t = photometric_terms(rendered, input_gt, weights, input_mask, mono_recon)
        value += v
        d_rgb += gr
        d_depth += gd
        terms["recon"] = t
    if generated is not None and lam != 0.0:
        v, gr, gd, t = photometric_terms(rendered, generated, weights, None, mono_gen)
        value += lam * v
        d_rgb += lam * gr
        d_depth += lam * gd
        terms["gen"] = t
    return LossResult(value, d_rgb, d_depth, terms)
