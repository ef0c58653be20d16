import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splatfuse.core import FrameRGBD
from splatfuse.errors import EmptyMask, NoSupervision, ShapeMismatch
from splatfuse.losses import (LossWeights, ScheduleConfig, fit_scale_shift, l1_loss, lambda_schedule,
                              photometric_terms, psnr, ssi_depth_loss, ssi_depth_loss_grad, ssim,
                              total_loss, weighted_sum)


def frame(rgb, depth):
    return FrameRGBD.from_depth(rgb, depth)


# --- L1 --------------------------------------------------------------------

def test_l1_examples():
    a = np.random.default_rng(0).uniform(size=(4, 5, 3))
    assert l1_loss(a, a) == 0.0
    assert l1_loss(np.zeros((4, 4, 3)), np.full((4, 4, 3), 0.5), np.ones((4, 4), bool)) == 0.5
    assert l1_loss(a, 1 - a, np.zeros((4, 5), bool)) == 0.0


def test_l1_only_counts_masked_pixels():
    a = np.zeros((2, 2, 3))
    b = np.zeros((2, 2, 3))
    b[0, 0] = 1.0
    b[1, 1] = 0.5
    m = np.array([[True, False], [False, False]])
    assert l1_loss(a, b, m) == 1.0


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        l1_loss(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ShapeMismatch):
        ssim(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))
    with pytest.raises(ShapeMismatch):
        psnr(np.zeros(3), np.zeros(4))


# --- SSIM / PSNR -------------------------------------------------------------

def test_ssim_identical_and_constant():
    a = np.random.default_rng(1).uniform(size=(20, 17, 3))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    c = np.full((12, 12, 3), 0.37)
    assert ssim(c, c) == pytest.approx(1.0, abs=1e-12)


def test_ssim_black_vs_white_closed_form():
    c1 = 0.01 ** 2
    expected = (2 * 0 * 1 + c1) / (0 + 1 + c1)
    assert ssim(np.zeros((16, 16, 3)), np.ones((16, 16, 3))) == pytest.approx(expected, rel=1e-9)
    assert expected == pytest.approx(9.999e-5, rel=1e-4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_ssim_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(size=(2, 14, 15, 3))
    s = ssim(a, b)
    assert -1 <= s <= 1
    assert abs(s - ssim(b, a)) < 1e-9


def test_psnr_examples():
    a = np.full((10, 10), 0.5)
    assert psnr(a, a) == 99.0
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)
    assert psnr(np.zeros((3, 3)), np.ones((3, 3))) == pytest.approx(0.0, abs=1e-12)


# --- scale/shift invariant depth -----------------------------------------

def test_ssi_examples():
    d = np.random.default_rng(2).uniform(1, 5, size=(8, 8))
    assert ssi_depth_loss(d, d) < 1e-12
    assert ssi_depth_loss(2 * d + 3, d) < 1e-6


def test_ssi_constant_prediction_by_hand():
    pred = np.array([2.0, 2.0, 2.0])
    target = np.array([1.0, 2.0, 6.0])
    eps = 1e-8
    # regularized normal equations solved by Cramer's rule
    a11, a12, a22 = 3 * 4 + eps, 3 * 2.0, 3 + eps
    r1, r2 = 2.0 * target.sum(), target.sum()
    det = a11 * a22 - a12 * a12
    s = (r1 * a22 - a12 * r2) / det
    t = (a11 * r2 - a12 * r1) / det
    expected = np.abs(s * pred + t - target).mean()
    assert ssi_depth_loss(pred, target) == pytest.approx(expected, rel=1e-9)
    mad = np.abs(target - target.mean()).mean()
    assert ssi_depth_loss(pred, target) == pytest.approx(mad, abs=1e-6)


def test_fit_scale_shift_recovers_affine_map():
    x = np.array([1.0, 2.0, 4.0])
    s, t, _ = fit_scale_shift(x, 3 * x - 2)
    assert s == pytest.approx(3.0) and t == pytest.approx(-2.0)


def test_ssi_needs_two_pixels():
    d = np.ones((3, 3))
    m = np.zeros((3, 3), bool)
    m[0, 0] = True
    with pytest.raises(EmptyMask):
        ssi_depth_loss(d, d, m)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.1, 10), st.floats(-5, 5))
def test_ssi_affine_invariance(seed, s, t):
    d = np.random.default_rng(seed).uniform(0.5, 10, size=(9, 11))
    assert ssi_depth_loss(s * d + t, d) < 1e-6


# --- schedule ----------------------------------------------------------------

def test_schedule_examples():
    cfg = ScheduleConfig(1000, 7000)
    assert lambda_schedule(1000, cfg) == 0.0
    assert lambda_schedule(4000, cfg) == 1.0
    assert abs(lambda_schedule(7000, cfg)) < 1e-12
    assert lambda_schedule(999, cfg) == 0.0 and lambda_schedule(7001, cfg) == 0.0


def test_schedule_rejects_bad_range():
    with pytest.raises(ValueError):
        ScheduleConfig(5, 5)
    with pytest.raises(ValueError):
        ScheduleConfig(-1, 5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 5000), st.integers(1, 5000))
def test_schedule_shape(k0, span):
    cfg = ScheduleConfig(k0, k0 + span)
    ks = np.arange(k0 - 3, k0 + span + 4)
    vals = np.array([lambda_schedule(int(k), cfg) for k in ks])
    assert np.all(vals >= 0) and vals.max() <= 1.0
    for k in range(k0, k0 + span + 1):
        mirror = 2 * k0 + span - k
        assert lambda_schedule(k, cfg) == pytest.approx(lambda_schedule(mirror, cfg), abs=1e-12)
    if span % 2 == 0:
        assert int(np.sum(vals == 1.0)) == 1


# --- combined objective ------------------------------------------------------

def test_total_loss_examples():
    rng = np.random.default_rng(3)
    gt = frame(rng.uniform(size=(12, 12, 3)), rng.uniform(1, 3, size=(12, 12)))
    assert total_loss(gt, gt).value == pytest.approx(0.0, abs=1e-12)
    r = frame(rng.uniform(size=(12, 12, 3)), rng.uniform(1, 3, size=(12, 12)))
    gen = frame(rng.uniform(size=(12, 12, 3)), rng.uniform(1, 3, size=(12, 12)))
    assert total_loss(r, gt, gen, lam=0.0).value == total_loss(r, gt).value
    assert weighted_sum(0.1, 0.3, 0.2, LossWeights(0.8, 0.2, 0.05)) == pytest.approx(0.15, abs=1e-15)
    res = total_loss(r, gt)
    t = res.terms["recon"]
    assert res.value == pytest.approx(0.8 * t["l1"] + 0.2 * t["ssim"] + 0.05 * t["depth"], rel=1e-12)


def test_total_loss_needs_supervision():
    f = frame(np.zeros((4, 4, 3)), np.ones((4, 4)))
    with pytest.raises(NoSupervision):
        total_loss(f)


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        LossWeights(-0.1, 0.2, 0.05)


@pytest.mark.parametrize("masked", [False, True])
def test_total_loss_gradient_matches_differences(masked):
    rng = np.random.default_rng(4 + masked)
    shape = (16, 16)
    rendered = frame(rng.uniform(0.1, 0.9, size=shape + (3,)), rng.uniform(1, 3, size=shape))
    gt = frame(rng.uniform(size=shape + (3,)), rng.uniform(1, 3, size=shape))
    gen = frame(rng.uniform(size=shape + (3,)), rng.uniform(1, 3, size=shape))
    mask = None
    if masked:
        mask = np.zeros(shape, bool)
        mask[2:11, 3:14] = True
    kw = dict(weights=LossWeights(0.8, 0.2, 0.05), lam=0.7, input_mask=mask)
    res = total_loss(rendered, gt, gen, **kw)
    h = 1e-6

    def value(rgb, depth):
        return total_loss(FrameRGBD(rgb, depth, rendered.transmittance, rendered.valid), gt, gen, **kw).value

    errs = []
    for _ in range(40):
        y, x, c = rng.integers(16), rng.integers(16), rng.integers(3)
        up, dn = rendered.rgb.copy(), rendered.rgb.copy()
        up[y, x, c] += h
        dn[y, x, c] -= h
        num = (value(up, rendered.depth) - value(dn, rendered.depth)) / (2 * h)
        errs.append(abs(num - res.d_rgb[y, x, c]) / max(abs(num), 1e-6))
        up, dn = rendered.depth.copy(), rendered.depth.copy()
        up[y, x] += h
        dn[y, x] -= h
        num = (value(rendered.rgb, up) - value(rendered.rgb, dn)) / (2 * h)
        errs.append(abs(num - res.d_depth[y, x]) / max(abs(num), 1e-6))
    assert max(errs) < 1e-3


def test_ssi_gradient_matches_differences():
    rng = np.random.default_rng(5)
    pred, target = rng.uniform(1, 4, size=(2, 16, 16))
    _, g = ssi_depth_loss_grad(pred, target)
    h = 1e-6
    for _ in range(30):
        i, j = rng.integers(16, size=2)
        up, dn = pred.copy(), pred.copy()
        up[i, j] += h
        dn[i, j] -= h
        num = (ssi_depth_loss(up, target) - ssi_depth_loss(dn, target)) / (2 * h)
        assert num == pytest.approx(g[i, j], rel=1e-3, abs=1e-9)


def test_masked_terms_equal_cropped_terms():
    rng = np.random.default_rng(6)
    r = frame(rng.uniform(size=(12, 14, 3)), rng.uniform(1, 2, size=(12, 14)))
    gt = frame(rng.uniform(size=(12, 14, 3)), rng.uniform(1, 2, size=(12, 14)))
    mask = np.zeros((12, 14), bool)
    mask[6:12, 7:14] = True
    w = LossWeights()
    full = photometric_terms(r, gt, w, mask)[0]
    crop = photometric_terms(r.crop(7, 6, 7, 6), gt.crop(7, 6, 7, 6), w)[0]
    assert full == pytest.approx(crop, abs=1e-12)
    assert math.isfinite(full)
