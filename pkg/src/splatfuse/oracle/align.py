"""Depth alignment of oracle output and reference-view selection."""

from __future__ import annotations

import logging

import numpy as np

from ..losses import fit_scale_shift

log = logging.getLogger(__name__)


def align_depth(generated, rendered, valid):
    """Affinely map ``generated`` depth onto ``rendered`` depth.

    Scale and shift are fitted by least squares over pixels valid in both
    (``valid`` marks usable rendered depth; generated depth must be positive
    and finite) and applied to every generated pixel with positive depth.
    Pixels without generated depth stay at 0.

    When the generated depth is constant over the fit region the affine fit
    is degenerate; the generated depth is then rescaled so its mean matches
    the rendered mean. With fewer than two usable pixels the generated depth
    is returned unchanged.
    """
    generated = np.asarray(generated, dtype=np.float64)
    rendered = np.asarray(rendered, dtype=np.float64)
    have = np.isfinite(generated) & (generated > 0)
    m = np.asarray(valid, dtype=bool) & have & np.isfinite(rendered)
    if m.sum() < 2:
        return generated.copy()
    g, r = generated[m], rendered[m]
    if np.ptp(g) <= 1e-12 * max(abs(g).max(), 1.0):
        log.debug("degenerate depth fit; scaling generated depth to the rendered mean")
        return np.where(have, generated * (r.mean() / g.mean()), 0.0)
    s, t, _ = fit_scale_shift(g, r)
    return np.where(have, s * generated + t, 0.0)


def select_reference(input_cameras, trajectory_cameras) -> int:
    """Index of the input camera whose center is closest to the fragment's middle pose.

    Ties go to the lower index.
    """
    mid = trajectory_cameras[len(trajectory_cameras) // 2].center
    dist = [float(np.linalg.norm(c.center - mid)) for c in input_cameras]
    return int(np.argmin(dist))
