"""Compare the compiled and numpy rasterizer backends.

Usage: python benchmarks/bench_raster.py [--disks 500 2000 8000] [--size 64] [--repeats 5]

Prints forward and forward+backward wall time per backend and checks that
both backends agree on the rendered image and the gradients.
"""

import argparse
import time

import numpy as np

from splatfuse.core import render, render_backward
from splatfuse.core.backend import available
from splatfuse.core.splats import SplatCloud
from splatfuse.io.synthetic import SyntheticScene, default_scene_spec, rig_cameras


def timed(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--disks", type=int, nargs="+", default=[500, 2000, 8000])
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    spec = default_scene_spec(width=args.size, height=args.size)
    scene = SyntheticScene(spec)
    cam = rig_cameras(spec.rig)[5]
    rng = np.random.default_rng(0)
    backends = available()
    print(f"backends: {', '.join(backends)}; image {args.size}x{args.size}")
    print(f"{'disks':>6} {'backend':>9} {'forward ms':>11} {'fwd+bwd ms':>11}")
    for n in args.disks:
        pts, cols, nrm = scene.sample_points(n, rng)
        cloud = SplatCloud.from_points(pts, cols, nrm, 0.05, 0.5)
        g_rgb = rng.normal(size=(args.size, args.size, 3))
        results = {}
        for be in backends:
            fwd = timed(lambda: render(cloud, cam, backend=be), args.repeats)

            def both():
                f = render(cloud, cam, backend=be)
                return f, render_backward(cloud, cam, f, g_rgb, backend=be)

            full = timed(both, args.repeats)
            results[be] = both()
            print(f"{n:>6} {be:>9} {fwd * 1e3:>11.2f} {full * 1e3:>11.2f}")
        if len(results) == 2:
            (fa, ga), (fb, gb) = results.values()
            dimg = np.abs(fa.rgb - fb.rgb).max()
            dgrad = np.abs(ga.position - gb.position).max() / max(np.abs(ga.position).max(), 1e-30)
            print(f"{'':>6} agreement: max |rgb diff| {dimg:.2e}, relative position-grad diff {dgrad:.2e}")


if __name__ == "__main__":
    main()
