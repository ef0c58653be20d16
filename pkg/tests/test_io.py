import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splatfuse.core import Camera, FrameRGBD, SplatCloud, look_at
from splatfuse.errors import BadRotation, MalformedFile, SchemaViolation
from splatfuse.io import (Primitive, RigSpec, SceneDataset, SyntheticSceneSpec, default_scene_spec,
                          load_dataset, load_points, load_splats, read_camera, read_cameras, read_frame,
                          read_pfm, read_png, run_eval, save_dataset, save_points, save_splats,
                          synth_scene, write_camera, write_cameras, write_frame, write_pfm, write_png)
from splatfuse.io.cameras import camera_from_dict, camera_to_dict
from splatfuse.io.images import decode_pfm, decode_png, encode_pfm, encode_png, srgb_encode
from splatfuse.io.synthetic import SyntheticScene
from splatfuse.losses import ssim
from splatfuse.protocol import eval_manifest


# --- images ------------------------------------------------------------------

def test_pfm_round_trip_bit_exact(tmp_path):
    d = np.random.default_rng(0).uniform(0.1, 50, size=(7, 9)).astype(np.float32).astype(np.float64)
    write_pfm(tmp_path / "d.pfm", d)
    back = read_pfm(tmp_path / "d.pfm")
    assert back.dtype == np.float64 and np.array_equal(back, d)
    raw = (tmp_path / "d.pfm").read_bytes()
    assert raw.startswith(b"Pf\n9 7\n-1.0\n")


@pytest.mark.parametrize("data,offset", [
    (b"Pf\n4 4", None),
    (b"Pf\nx 4\n-1.0\n", 3),
    (b"P5\n4 4\n-1.0\n", 0),
    (b"Pf\n2 2\n-1.0\n" + b"\0" * 12, None),
])
def test_pfm_malformed(data, offset):
    with pytest.raises(MalformedFile) as exc:
        decode_pfm(data)
    if offset is not None:
        assert exc.value.offset == offset
    assert "offset" in str(exc.value) or exc.value.offset is None


def test_truncated_pfm_header_reports_offset():
    with pytest.raises(MalformedFile) as exc:
        decode_pfm(encode_pfm(np.ones((3, 3)))[:5])
    assert exc.value.offset is not None


def test_png_round_trip_within_quantization(tmp_path):
    rgb = np.random.default_rng(1).uniform(size=(6, 5, 3))
    write_png(tmp_path / "a.png", rgb)
    back = read_png(tmp_path / "a.png")
    # 8-bit sRGB storage: within half a code value in the encoded domain
    assert np.max(np.abs(srgb_encode(back) - srgb_encode(rgb))) <= 0.5 / 255 + 1e-12
    lin = decode_png(encode_png(rgb, "linear"), "linear")
    assert np.max(np.abs(lin - rgb)) <= 1 / 255
    again = decode_png(encode_png(back))
    assert np.allclose(again, back, atol=1e-12)


def test_png_malformed():
    with pytest.raises(MalformedFile) as exc:
        decode_png(b"definitely not a png")
    assert exc.value.offset == 0


def test_frame_round_trip(tmp_path):
    ds, _ = synth_scene(default_scene_spec(width=24, height=20, num_frames=2))
    f = ds.frames[0]
    write_frame(tmp_path / "f", f)
    back = read_frame(tmp_path / "f")
    assert np.array_equal(back.valid, f.valid)
    assert np.array_equal(back.depth, f.depth.astype(np.float32).astype(np.float64))


# --- cameras -----------------------------------------------------------------

def identity_camera():
    return Camera(50.0, 51.0, 15.5, 12.25, 32, 24, np.eye(3), np.zeros(3))


def test_camera_round_trip_exact(tmp_path):
    cams = [identity_camera(), look_at([0.1, -0.7, -3.3], [0, 0, 0], up=(0, -1, 0), fx=1 / 3, fy=np.pi,
                                       cx=0.1, cy=2 / 7, width=5, height=7)]
    write_cameras(tmp_path / "c.json", cams)
    back = read_cameras(tmp_path / "c.json")
    for a, b in zip(cams, back):
        assert np.array_equal(a.rotation, b.rotation) and np.array_equal(a.translation, b.translation)
        assert (a.fx, a.fy, a.cx, a.cy, a.width, a.height) == (b.fx, b.fy, b.cx, b.cy, b.width, b.height)
    write_camera(tmp_path / "one.json", cams[0])
    assert read_camera(tmp_path / "one.json") == cams[0]


def test_camera_rejects_reflection():
    d = camera_to_dict(identity_camera())
    d["R"] = [1, 0, 0, 0, 1, 0, 0, 0, -1]
    with pytest.raises(BadRotation):
        camera_from_dict(d)


def test_camera_rejects_non_orthonormal():
    d = camera_to_dict(identity_camera())
    d["R"][0] = 1.001
    with pytest.raises(BadRotation):
        camera_from_dict(d)


@pytest.mark.parametrize("field", ["fx", "fy", "cx", "cy", "width", "height", "R", "t"])
def test_camera_missing_field_named(field):
    d = camera_to_dict(identity_camera())
    del d[field]
    with pytest.raises(SchemaViolation) as exc:
        camera_from_dict(d)
    assert exc.value.field == field and field in str(exc.value)


def test_camera_bad_types():
    d = camera_to_dict(identity_camera())
    d["width"] = 3.5
    with pytest.raises(SchemaViolation):
        camera_from_dict(d)
    d = camera_to_dict(identity_camera())
    d["t"] = [0, 0]
    with pytest.raises(SchemaViolation):
        camera_from_dict(d)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_camera_random_round_trip(seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.linalg.det(q))
    c = Camera(*rng.uniform(1, 100, 4), 8, 6, q, rng.normal(size=3))
    back = camera_from_dict(json.loads(json.dumps(camera_to_dict(c))))
    assert back == c


# --- PLY -----------------------------------------------------------------------

@pytest.mark.parametrize("binary", [True, False])
@pytest.mark.parametrize("degree", [0, 2])
def test_splat_round_trip(tmp_path, binary, degree):
    rng = np.random.default_rng(degree)
    n = 7
    k = (degree + 1) ** 2
    cloud = SplatCloud(rng.normal(size=(n, 3)), rng.uniform(size=n), rng.normal(size=(n, 3)),
                       rng.normal(size=(n, 3)), rng.normal(size=(n, 2)), rng.normal(size=(n, k, 3)))
    save_splats(tmp_path / "s.ply", cloud, binary=binary)
    back = load_splats(tmp_path / "s.ply")
    for name in ("positions", "opacities", "tangent_u", "tangent_v", "log_scales", "sh"):
        assert np.array_equal(getattr(back, name), getattr(cloud, name)), name
    head = (tmp_path / "s.ply").read_bytes()[:400]
    fmt = b"binary_little_endian" if binary else b"ascii"
    assert fmt in head and b"property double tu_x" in head and b"sh_0_r" in head


def test_points_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    p, c = rng.normal(size=(10, 3)), rng.uniform(size=(10, 3))
    save_points(tmp_path / "p.ply", p, c)
    bp, bc = load_points(tmp_path / "p.ply")
    assert np.array_equal(bp, p) and np.array_equal(bc, c)


def test_malformed_ply(tmp_path):
    (tmp_path / "x.ply").write_bytes(b"ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nend_header\n1\n")
    with pytest.raises(MalformedFile):
        load_points(tmp_path / "x.ply")
    (tmp_path / "y.ply").write_bytes(b"not a ply")
    with pytest.raises(MalformedFile):
        load_splats(tmp_path / "y.ply")


def test_splats_missing_property(tmp_path):
    (tmp_path / "x.ply").write_bytes(b"ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\n"
                                     b"property double y\nproperty double z\nend_header\n1 2 3\n")
    with pytest.raises(SchemaViolation):
        load_splats(tmp_path / "x.ply")


# --- synthetic scene -------------------------------------------------------------

def test_sphere_center_pixel():
    spec = SyntheticSceneSpec(primitives=[Primitive("sphere", (0, 0, 0), albedo=(1, 0, 0), radius=1.0)],
                              rig=RigSpec(num_frames=1, width=33, height=33))
    scene = SyntheticScene(spec)
    cam = Camera(30, 30, 16, 16, 33, 33, np.eye(3), np.array([0, 0, 5.0]))
    f = scene.render(cam)
    assert f.valid[16, 16]
    assert f.rgb[16, 16, 0] > 0 and f.rgb[16, 16, 1] == 0 and f.rgb[16, 16, 2] == 0
    assert f.depth[16, 16] == pytest.approx(4.0, abs=1e-12)
    # corner rays miss the sphere
    assert not f.valid[0, 0] and np.array_equal(f.rgb[0, 0], spec.background)


def test_synthetic_deterministic():
    a, _ = synth_scene(default_scene_spec(seed=4, width=20, height=16, num_frames=3))
    b, _ = synth_scene(default_scene_spec(seed=4, width=20, height=16, num_frames=3))
    assert np.array_equal(a.points, b.points) and np.array_equal(a.colors, b.colors)
    for x, y in zip(a.frames, b.frames):
        assert np.array_equal(x.rgb, y.rgb) and np.array_equal(x.depth, y.depth)


def test_default_scene_shape():
    spec = default_scene_spec()
    assert len(spec.primitives) >= 3 and spec.rig.num_frames == 16
    assert (spec.rig.width, spec.rig.height) == (64, 64)
    ds, _ = synth_scene(default_scene_spec(width=32, height=32))
    assert len(ds) == 16 and len(ds.points) == 2000


def test_spec_limits():
    with pytest.raises(ValueError):
        RigSpec(width=512, height=512)
    with pytest.raises(ValueError):
        SyntheticSceneSpec(primitives=[])


def test_spec_dict_round_trip():
    spec = default_scene_spec(seed=3)
    assert SyntheticSceneSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


def test_dataset_round_trip(tmp_path):
    ds, _ = synth_scene(default_scene_spec(width=16, height=12, num_frames=4))
    ds.manifest = eval_manifest(4, 16, 12, 0.5, 1)
    save_dataset(tmp_path / "ds", ds)
    back = load_dataset(tmp_path / "ds")
    assert len(back) == 4 and back.manifest.to_dict() == ds.manifest.to_dict()
    assert back.scene_spec == ds.scene_spec
    assert np.array_equal(back.points, ds.points)
    for a, b in zip(back.cameras, ds.cameras):
        assert a == b


def test_dataset_validation():
    cam = identity_camera()
    f = FrameRGBD.from_depth(np.zeros((24, 32, 3)), np.ones((24, 32)))
    with pytest.raises(ValueError):
        SceneDataset([cam, cam], [f])


# --- evaluation --------------------------------------------------------------------

def constant_dataset(value=0.6, n=4):
    cams = [identity_camera() for _ in range(n)]
    frames = [FrameRGBD.from_depth(np.full((24, 32, 3), value), np.ones((24, 32))) for _ in range(n)]
    return SceneDataset(cams, frames)


def test_eval_empty_cloud_closed_form(tmp_path):
    ds = constant_dataset(0.6)
    m = eval_manifest(4, 32, 24, 0.5, 0)
    res = run_eval(ds, SplatCloud.empty(), m, tmp_path)
    c1 = 0.01 ** 2
    for row in res["frames"]:
        assert np.isfinite(row["psnr"]) and row["psnr"] == pytest.approx(-10 * np.log10(0.36))
        assert row["ssim"] == pytest.approx(c1 / (0.36 + c1), rel=1e-9)
    rows = list(csv.reader(open(tmp_path / "metrics.csv")))
    assert rows[0] == ["frame", "psnr", "ssim"]
    assert len(rows) == 1 + len(m.test_indices) + 1 and rows[-1][0] == "mean"
    assert json.loads((tmp_path / "metrics.json").read_text())["mean"]["psnr"] == pytest.approx(res["mean"]["psnr"])


def test_eval_self_comparison_is_sentinel():
    # a cloud that renders exactly its own ground truth: the frames are taken from its renders
    from splatfuse.core import render
    cloud = SplatCloud.from_points([[0, 0, 3.0]], [[0.3, 0.6, 0.9]], [[0, 0, -1.0]], 0.5, 0.8)
    cams = [identity_camera() for _ in range(2)]
    frames = [render(cloud, c) for c in cams]
    ds = SceneDataset(cams, [FrameRGBD(f.rgb, f.depth, f.transmittance, f.valid) for f in frames])
    res = run_eval(ds, cloud, eval_manifest(2, 32, 24, 0.5, 0))
    assert res["mean"]["psnr"] == 99.0 and res["mean"]["ssim"] == pytest.approx(1.0)
    assert ssim(frames[0].rgb, frames[0].rgb) == pytest.approx(1.0)
