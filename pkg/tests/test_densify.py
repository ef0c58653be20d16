import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splatfuse.core import Camera, FrameRGBD, SplatCloud, project_splat, render
from splatfuse.core.render import SplatGradients
from splatfuse.densify import (DensifyConfig, ExpansionConfig, accumulate_stats, backproject_insert,
                               densify_apply, detect_unreliable, prune, select_candidates,
                               unreliable_masks)
from splatfuse.errors import InvalidDepth, LengthMismatch, ShapeMismatch

I3 = np.eye(3)


def cam(fx=50.0, w=32, h=32):
    return Camera(fx, fx, (w - 1) / 2, (h - 1) / 2, w, h, I3.copy(), np.zeros(3))


def cloud_n(n, scale=0.01, opacity=0.5):
    rng = np.random.default_rng(n)
    pos = rng.uniform(-1, 1, size=(n, 3)) + [0, 0, 5]
    return SplatCloud.from_points(pos, rng.uniform(size=(n, 3)), np.tile([0, 0, -1.0], (n, 1)),
                                  scale, opacity)


def grads(n, screen, contributed, position=None):
    z3 = np.zeros((n, 3))
    return SplatGradients(z3 if position is None else position, np.zeros(n), np.zeros((n, 2)), z3,
                          np.zeros((n, 1, 3)), z3, z3, np.asarray(screen, float),
                          np.asarray(contributed, bool))


# --- statistics --------------------------------------------------------------

def test_accumulate_examples():
    c = cloud_n(2)
    for _ in range(5):
        accumulate_stats(c, grads(2, [0.1, 0.7], [True, False]))
    assert c.grad_accum[0] == pytest.approx(0.5) and c.visibility_count[0] == 5
    assert c.grad_accum[1] == 0 and c.visibility_count[1] == 0


def test_accumulate_length_mismatch():
    with pytest.raises(LengthMismatch):
        accumulate_stats(cloud_n(3), grads(2, [0, 0], [True, True]))


def test_select_examples():
    c = cloud_n(3)
    c.grad_accum[:] = [0.01, 0.0001 * 100, 0.01 * 5]
    c.visibility_count[:] = [1, 100, 5]
    cfg = DensifyConfig(grad_threshold=2e-3, min_visibility=3)
    assert list(select_candidates(c, cfg)) == [2]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_select_monotone_and_gated(seed):
    rng = np.random.default_rng(seed)
    n = 50
    c = cloud_n(n)
    c.visibility_count[:] = rng.integers(0, 10, n)
    c.grad_accum[:] = rng.uniform(0, 0.01, n) * c.visibility_count
    thr, vis = rng.uniform(0, 0.01), int(rng.integers(1, 10))
    sel = set(select_candidates(c, DensifyConfig(grad_threshold=thr, min_visibility=vis)))
    assert all(c.visibility_count[i] >= vis for i in sel)
    higher = set(select_candidates(c, DensifyConfig(grad_threshold=thr * 1.5, min_visibility=vis)))
    stricter = set(select_candidates(c, DensifyConfig(grad_threshold=thr, min_visibility=vis + 1)))
    assert higher <= sel and stricter <= sel


def test_config_validation():
    with pytest.raises(ValueError):
        DensifyConfig(interval=0)
    with pytest.raises(ValueError):
        DensifyConfig(split_factor=1.0)
    with pytest.raises(ValueError):
        ExpansionConfig(tau_T=1.0)
    with pytest.raises(ValueError):
        ExpansionConfig(tau_D=0.0)


# --- clone / split / prune -----------------------------------------------------

def test_clone_small_disk():
    c = cloud_n(1, scale=0.01)
    c.grad_vec_accum[0] = [1.0, 0, 0]
    c.grad_accum[0], c.visibility_count[0] = 1.0, 10
    densify_apply(c, [0], DensifyConfig(split_scale_threshold=0.05))
    assert len(c) == 2
    assert np.array_equal(c.sh[0], c.sh[1]) and c.opacities[0] == c.opacities[1]
    # offset against the accumulated gradient by half the largest scale
    assert np.allclose(c.positions[1] - c.positions[0], [-0.005, 0, 0])
    assert np.all(c.grad_accum == 0) and np.all(c.visibility_count == 0)


def test_split_large_disk():
    c = cloud_n(2, scale=0.2)
    parent_scale = c.scales[0].copy()
    densify_apply(c, [0], DensifyConfig(split_scale_threshold=0.05), rng=np.random.default_rng(1))
    assert len(c) == 3
    assert np.allclose(c.scales[1:], parent_scale / 1.6)
    assert np.allclose(c.scales[0], 0.2)  # the untouched disk moved to the front


def test_densify_resets_new_stats_and_keeps_others():
    c = cloud_n(3, scale=0.2)
    c.grad_accum[:] = [1, 2, 3]
    c.visibility_count[:] = [4, 5, 6]
    c.extras["m"] = np.ones((3, 3))
    densify_apply(c, [1], DensifyConfig())
    assert list(c.grad_accum) == [1, 3, 0, 0]
    assert list(c.visibility_count) == [4, 6, 0, 0]
    assert np.all(c.extras["m"][:2] == 1) and np.all(c.extras["m"][2:] == 0)


def test_densify_empty_candidates():
    c = cloud_n(3)
    before = c.positions.copy()
    densify_apply(c, [], DensifyConfig())
    assert np.array_equal(before, c.positions)


def test_prune_examples():
    c = cloud_n(4, opacity=1.0)
    assert prune(c, DensifyConfig()) == 0 and len(c) == 4
    c.opacities[2] = 0.001
    c.visibility_count[:] = [1, 2, 3, 4]
    kept = c.positions[[0, 1, 3]].copy()
    assert prune(c, DensifyConfig(prune_opacity=0.005)) == 1
    assert np.array_equal(c.positions, kept) and list(c.visibility_count) == [1, 2, 4]


def test_prune_matches_rendering_without_pruned_disks():
    rng = np.random.default_rng(9)
    c = SplatCloud.from_points(rng.uniform([-0.4, -0.4, 4], [0.4, 0.4, 6], size=(5, 3)),
                               rng.uniform(size=(5, 3)), np.tile([0, 0, -1.0], (5, 1)), 0.3, 0.6)
    # the faint disk sits outside the view, so its contribution is zero
    c.opacities[3] = 0.001
    c.positions[3] = [50.0, 0, 5]
    camera = cam()
    before = render(c, camera)
    prune(c, DensifyConfig())
    after = render(c, camera)
    assert np.allclose(before.rgb, after.rgb, atol=1e-6)
    assert np.allclose(before.depth, after.depth, atol=1e-6)


# --- unreliable pixels ----------------------------------------------------------

def frame_with(opacity, depth, valid=None):
    opacity = np.asarray(opacity, float)
    valid = np.ones(opacity.shape, bool) if valid is None else valid
    return FrameRGBD(np.zeros(opacity.shape + (3,)), np.where(valid, depth, 0), 1 - opacity, valid)


def test_unreliable_examples():
    cfg = ExpansionConfig(tau_T=0.5, tau_D=0.5)
    d = np.full((3, 3), 2.0)
    assert not detect_unreliable(frame_with(np.ones((3, 3)), d), d, cfg).any()
    acc = np.ones((3, 3))
    acc[1, 1] = 0.2
    m = detect_unreliable(frame_with(acc, d), d, cfg)
    assert m[1, 1] and m.sum() == 1
    gen = d.copy()
    gen[0, 2] += 0.6
    m = detect_unreliable(frame_with(np.ones((3, 3)), d), gen, cfg)
    assert m[0, 2] and m.sum() == 1


def test_invalid_rendered_depth_is_unreliable():
    valid = np.ones((2, 2), bool)
    valid[0, 0] = False
    cfg = ExpansionConfig(tau_T=0.5, tau_D=0.5)
    m = detect_unreliable(frame_with(np.ones((2, 2)), np.ones((2, 2)), valid), np.ones((2, 2)), cfg)
    assert m.tolist() == [[True, False], [False, False]]


def test_unreliable_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        detect_unreliable(frame_with(np.ones((2, 2)), np.ones((2, 2))), np.ones((3, 2)),
                          ExpansionConfig(tau_D=1.0))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_unreliable_decomposes(seed):
    rng = np.random.default_rng(seed)
    shape = (6, 7)
    acc = rng.uniform(size=shape)
    valid = rng.uniform(size=shape) > 0.2
    d = rng.uniform(1, 3, size=shape)
    gen = d + rng.normal(scale=0.5, size=shape)
    cfg = ExpansionConfig(tau_T=rng.uniform(0.05, 0.95), tau_D=rng.uniform(0.05, 1.0))
    f = frame_with(acc, d, valid)
    mt, md = unreliable_masks(f, gen, cfg)
    assert np.array_equal(mt, f.opacity < cfg.tau_T)
    assert np.array_equal(md, ~valid | (np.abs(f.depth - gen) > cfg.tau_D))
    assert np.array_equal(detect_unreliable(f, gen, cfg), mt | md)


# --- back-projection -------------------------------------------------------------

def restored(depth, rgb=None, shape=(32, 32)):
    depth = np.broadcast_to(np.asarray(depth, float), shape).copy()
    rgb = np.full(shape + (3,), 0.5) if rgb is None else rgb
    return FrameRGBD.from_depth(rgb, depth)


def test_backproject_principal_ray():
    c = Camera(50, 50, 16, 16, 32, 32, I3.copy(), np.zeros(3))
    m = np.zeros((32, 32), bool)
    m[16, 16] = True
    cloud = SplatCloud.empty()
    assert backproject_insert(cloud, restored(3.0), c, m, stride=1) == 1
    assert np.allclose(cloud.positions[0], [0, 0, 3])
    assert cloud.opacities[0] == pytest.approx(0.1)
    assert np.allclose(cloud.normals[0], [0, 0, -1])
    assert np.allclose(cloud.scales[0], 3 / 50)


def test_backproject_by_hand():
    c = Camera(10, 10, 5, 5, 32, 32, I3.copy(), np.zeros(3))
    m = np.zeros((32, 32), bool)
    m[5, 15] = True
    cloud = SplatCloud.empty()
    backproject_insert(cloud, restored(2.0), c, m, stride=1)
    assert np.allclose(cloud.positions[0], [2, 0, 2])


def test_backproject_round_trip_projection():
    rng = np.random.default_rng(2)
    R = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    R *= np.sign(np.linalg.det(R))
    c = Camera(40, 42, 15.3, 16.1, 32, 32, R, rng.normal(size=3))
    m = rng.uniform(size=(32, 32)) > 0.5
    cloud = SplatCloud.empty()
    backproject_insert(cloud, restored(rng.uniform(1, 4, size=(32, 32))), c, m, stride=4)
    ys, xs = np.nonzero(m & (np.indices((32, 32))[0] % 4 == 0) & (np.indices((32, 32))[1] % 4 == 0))
    assert len(cloud) == len(ys)
    for disk, x, y in zip(cloud, xs, ys):
        fp = project_splat(disk, c)
        assert abs(fp.center[0] - x) < 0.5 and abs(fp.center[1] - y) < 0.5


def test_backproject_rejects_bad_depth():
    m = np.ones((32, 32), bool)
    depth = np.full((32, 32), 2.0)
    depth[0, 0] = 0.0
    f = FrameRGBD(np.zeros((32, 32, 3)), depth, np.zeros((32, 32)), np.ones((32, 32), bool))
    with pytest.raises(InvalidDepth):
        backproject_insert(SplatCloud.empty(), f, cam(), m)


def test_backproject_render_reproduces_color():
    # smooth restored image so neighboring inserted disks agree in color
    ys, xs = np.indices((32, 32)) / 31.0
    rgb = np.stack([xs, ys, 0.5 * (xs + ys)], axis=-1) * 0.8 + 0.1
    c = cam()
    cloud = SplatCloud.empty()
    m = np.ones((32, 32), bool)
    backproject_insert(cloud, restored(3.0, rgb), c, m)
    f = render(cloud, c)
    sel = np.zeros((32, 32), bool)
    sel[::4, ::4] = True
    # new disks are translucent (opacity 0.1); compare opacity-normalized color
    normalized = f.rgb[sel] / f.opacity[sel][:, None]
    assert np.max(np.abs(normalized - rgb[sel])) < 0.15
