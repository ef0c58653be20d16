import numpy as np
import pytest

from reference import fd_gradients, random_scene, relative_errors, to_package
from splatfuse.core import render, render_backward

TOL = 1e-3


def analytic(cloud, camera, weights):
    f = render(cloud, camera)
    return render_backward(cloud, camera, f, *weights)


def random_weights(rng, w=32, h=32):
    return rng.normal(size=(h, w, 3)), rng.normal(size=(h, w)), rng.normal(size=(h, w))


@pytest.mark.parametrize("seed", range(100, 104))
def test_gradients_match_frozen_structure_differences(seed):
    rng = np.random.default_rng(seed)
    scene, c = random_scene(rng)
    cloud, camera = to_package(scene, c)
    w = random_weights(rng)
    g = analytic(cloud, camera, w)
    fd = fd_gradients(scene, c, w)
    pairs = {"position": g.position, "opacity": g.opacity, "log_scale": g.log_scale,
             "rotation": g.rotation, "color": g.sh[:, 0, :]}
    for name, a in pairs.items():
        err = relative_errors(a, fd[name])
        assert err.size and err.max() < TOL, (name, err.max())


def _package_fd(cloud, camera, weights, arr, idx, h=1e-5):
    def loss():
        cloud.touch()
        f = render(cloud, camera)
        wc, wd, wt = weights
        return float(np.sum(wc * f.rgb) + np.sum(wd * f.depth) + np.sum(wt * f.transmittance))

    base = arr[idx]
    arr[idx] = base + h
    hi = loss()
    arr[idx] = base - h
    lo = loss()
    arr[idx] = base
    cloud.touch()
    return (hi - lo) / (2 * h)


@pytest.mark.parametrize("degree", [1, 2])
def test_view_dependent_color_gradients(degree):
    rng = np.random.default_rng(7 + degree)
    scene, c = random_scene(rng, n=6)
    cloud, camera = to_package(scene, c)
    k = (degree + 1) ** 2
    sh = np.zeros((len(cloud), k, 3))
    sh[:, 0] = 0.5
    sh[:, 1:] = 0.1 * rng.normal(size=(len(cloud), k - 1, 3))
    cloud.sh = sh
    cloud.touch()
    # color changes never move disks, so differencing the full renderer is exact here
    w = random_weights(rng)
    g = analytic(cloud, camera, w)
    errs = []
    for i in range(len(cloud)):
        for j in range(k):
            for ch in range(3):
                num = _package_fd(cloud, camera, w, cloud.sh, (i, j, ch))
                errs.append((g.sh[i, j, ch], num))
        for ax in range(3):
            num = _package_fd(cloud, camera, w, cloud.positions, (i, ax))
            errs.append((g.position[i, ax], num))
    a, f = np.array(errs).T
    err = relative_errors(a, f)
    assert err.max() < TOL
