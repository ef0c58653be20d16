"""Independent reference implementation used as a test oracle.

Written directly from the compositing definition, without using the
package's renderer. Every pixel/disk pair is evaluated densely; the
per-pixel contributing list (which hits, in which order, where compositing
stops) can be frozen at a base point so finite differences measure the
smooth function that the analytic backward pass differentiates.
"""

import numpy as np

NEAR = 0.01
CUTOFF_Q = 9.0
T_MIN = 1e-4
DEPTH_EPS = 1e-6


def rodrigues(v, axis, angle):
    axis = axis / np.linalg.norm(axis)
    return v * np.cos(angle) + np.cross(axis, v) * np.sin(angle) + axis * (axis @ v) * (1 - np.cos(angle))


class Scene:
    """Plain parameter container (world space), one row per disk."""

    def __init__(self, pos, alpha, tu, tv, log_s, color):
        self.pos = np.array(pos, dtype=float)
        self.alpha = np.array(alpha, dtype=float)
        self.tu = np.array(tu, dtype=float)
        self.tv = np.array(tv, dtype=float)
        self.log_s = np.array(log_s, dtype=float)
        self.color = np.array(color, dtype=float)

    def copy(self):
        return Scene(self.pos, self.alpha, self.tu, self.tv, self.log_s, self.color)


def pairwise(scene, R, t, fx, fy, cx, cy, w, h):
    """(g, lam, hit) arrays of shape (H*W, N)."""
    mu = scene.pos @ R.T + t
    ta = scene.tu @ R.T
    tb = scene.tv @ R.T
    n = np.cross(ta, tb)
    xs, ys = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    r = np.stack([(xs.ravel() - cx) / fx, (ys.ravel() - cy) / fy, np.ones(w * h)], axis=1)
    nr = r @ n.T
    nmu = np.sum(n * mu, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = nmu[None, :] / nr
    X = lam[..., None] * r[:, None, :] - mu[None]
    u = np.sum(X * ta[None], axis=2)
    v = np.sum(X * tb[None], axis=2)
    s = np.exp(scene.log_s)
    q = (u / s[:, 0]) ** 2 + (v / s[:, 1]) ** 2
    g = np.exp(-0.5 * q)
    hit = (np.abs(nr) >= 1e-9) & (lam > NEAR) & (q <= CUTOFF_Q)
    return g, lam, hit


def structure(scene, cam):
    """Per-pixel ordered contributing disk lists at the given parameters."""
    g, lam, hit = pairwise(scene, *cam)
    lists = []
    for p in range(g.shape[0]):
        idx = np.flatnonzero(hit[p])
        idx = idx[np.lexsort((idx, lam[p, idx]))]
        T = 1.0
        keep = []
        for i in idx:
            keep.append(i)
            T *= 1 - scene.alpha[i] * g[p, i]
            if T < T_MIN:
                break
        lists.append(keep)
    return lists


def composite(scene, cam, lists, bg=(0.0, 0.0, 0.0), valid_from=None):
    """Composite following the frozen ``lists``; returns rgb, depth, T, valid."""
    g, lam, _ = pairwise(scene, *cam)
    w, h = cam[-2], cam[-1]
    npix = w * h
    rgb = np.zeros((npix, 3))
    depth = np.zeros(npix)
    trans = np.ones(npix)
    valid = np.zeros(npix, dtype=bool)
    color = np.clip(scene.color, 0, 1)
    bg = np.asarray(bg, dtype=float)
    for p, lst in enumerate(lists):
        T = 1.0
        c = np.zeros(3)
        d = 0.0
        for i in lst:
            a = scene.alpha[i] * g[p, i]
            c += color[i] * a * T
            d += lam[p, i] * a * T
            T *= 1 - a
        rgb[p] = c + bg * T
        trans[p] = T
        ok = (1 - T > DEPTH_EPS) if valid_from is None else valid_from[p]
        valid[p] = ok
        depth[p] = d / (1 - T) if ok else 0.0
    return rgb.reshape(h, w, 3), depth.reshape(h, w), trans.reshape(h, w), valid.reshape(h, w)


def render_reference(scene, cam, bg=(0.0, 0.0, 0.0)):
    return composite(scene, cam, structure(scene, cam), bg)


def random_scene(rng, n=10, width=32, height=32):
    """A random scene of camera-facing-ish disks in front of a random camera.

    Returns (scene, cam tuple (R, t, fx, fy, cx, cy, w, h)).
    """
    # random camera pose looking roughly at the origin
    eye = rng.normal(size=3)
    eye = eye / np.linalg.norm(eye) * rng.uniform(4, 6)
    z = -eye / np.linalg.norm(eye)
    x = np.cross(rng.normal(size=3), z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    t = -R @ eye
    f = rng.uniform(30, 45)
    cam = (R, t, f, f, (width - 1) / 2 + rng.uniform(-1, 1), (height - 1) / 2 + rng.uniform(-1, 1),
           width, height)
    pos = rng.uniform(-1.2, 1.2, size=(n, 3))
    tu, tv = [], []
    for _ in range(n):
        nrm = -z + 0.6 * rng.normal(size=3)
        nrm /= np.linalg.norm(nrm)
        a = np.cross(nrm, rng.normal(size=3))
        a /= np.linalg.norm(a)
        tu.append(a)
        tv.append(np.cross(nrm, a))
    log_s = np.log(rng.uniform(0.2, 0.6, size=(n, 2)))
    alpha = rng.uniform(0.2, 0.9, size=n)
    color = rng.uniform(0.1, 0.9, size=(n, 3))
    return Scene(pos, alpha, tu, tv, log_s, color), cam


def linear_loss(scene, cam, lists, weights, valid_from):
    wc, wd, wt = weights
    rgb, depth, trans, _ = composite(scene, cam, lists, valid_from=valid_from)
    return float(np.sum(wc * rgb) + np.sum(wd * depth) + np.sum(wt * trans))


def fd_gradients(scene, cam, weights, h=1e-4):
    """Central differences of ``linear_loss`` with the base structure frozen.

    Returns a dict with position (N, 3), opacity (N,), log_scale (N, 2),
    rotation (N, 3; angles about t_u, t_v, normal) and color (N, 3).
    """
    lists = structure(scene, cam)
    _, _, _, valid = composite(scene, cam, lists)
    valid = valid.ravel()
    n = len(scene.alpha)
    out = {"position": np.zeros((n, 3)), "opacity": np.zeros(n), "log_scale": np.zeros((n, 2)),
           "rotation": np.zeros((n, 3)), "color": np.zeros((n, 3))}
    involved = set(i for lst in lists for i in lst)

    def diff(mutate):
        hi, lo = scene.copy(), scene.copy()
        mutate(hi, h)
        mutate(lo, -h)
        return (linear_loss(hi, cam, lists, weights, valid) - linear_loss(lo, cam, lists, weights, valid)) / (2 * h)

    for i in range(n):
        if i not in involved:
            continue
        for k in range(3):
            out["position"][i, k] = diff(lambda s, e: s.pos.__setitem__((i, k), s.pos[i, k] + e))
            out["color"][i, k] = diff(lambda s, e: s.color.__setitem__((i, k), s.color[i, k] + e))
        out["opacity"][i] = diff(lambda s, e: s.alpha.__setitem__(i, s.alpha[i] + e))
        for k in range(2):
            out["log_scale"][i, k] = diff(lambda s, e: s.log_s.__setitem__((i, k), s.log_s[i, k] + e))
        axes = [scene.tu[i].copy(), scene.tv[i].copy(), np.cross(scene.tu[i], scene.tv[i])]
        for k, ax in enumerate(axes):
            def rot(s, e, ax=ax):
                s.tu[i] = rodrigues(s.tu[i], ax, e)
                s.tv[i] = rodrigues(s.tv[i], ax, e)
            out["rotation"][i, k] = diff(rot)
    return out


def relative_errors(analytic, numeric, floor=1e-6):
    """Relative errors on entries where either gradient exceeds ``floor``."""
    a = np.asarray(analytic, dtype=float).ravel()
    f = np.asarray(numeric, dtype=float).ravel()
    sel = (np.abs(a) > floor) | (np.abs(f) > floor)
    return np.abs(a[sel] - f[sel]) / np.maximum(np.abs(a[sel]), np.abs(f[sel]))


def to_package(scene, cam):
    from splatfuse.core import Camera, SplatCloud

    R, t, fx, fy, cx, cy, w, h = cam
    cloud = SplatCloud(scene.pos, scene.alpha, scene.tu, scene.tv, scene.log_s, scene.color[:, None, :])
    return cloud, Camera(fx, fy, cx, cy, w, h, R, t)
