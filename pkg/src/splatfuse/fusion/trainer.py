"""Cyclic reconstruction/restoration training.

Training starts from input views alone. After the warm-up, every
``cycle_interval`` iterations a fusion cycle renders a novel camera path,
has the oracle restore it, aligns the restored depth to the rendered one,
adds the restored frames to the supervision set and back-projects restored
pixels where the current scene is unreliable. Generated views are then
drawn alongside input views with loss weight ``lambda_max * lambda(k)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.spatial import cKDTree

from ..core.camera import Camera
from ..core.frame import FrameRGBD
from ..core.render import DEFAULT_SETTINGS, render, render_backward
from ..core.splats import SplatCloud
from ..densify import (accumulate_stats, backproject_insert, densify_apply, detect_unreliable,
                       prune, select_candidates)
from ..errors import BadResponse, EmptyPoints, OracleUnavailable
from ..io.evaluate import evaluate_views, summarize
from ..losses import lambda_schedule, total_loss
from ..oracle.align import align_depth, select_reference
from ..oracle.base import Oracle, OracleRequest
from ..trajectory import sample_fusion_trajectories
from .config import FusionConfig
from .optim import Adam, position_lr

log = logging.getLogger(__name__)


@dataclass
class View:
    """One supervision item: a camera with its target frame."""

    camera: Camera
    frame: FrameRGBD
    keep: Optional[np.ndarray] = None  # keep-mask; None = every pixel supervises
    kind: str = "input"  # "input" or "generated"
    cycle: Optional[int] = None  # fusion cycle that produced a generated view
    index: Optional[int] = None  # dataset frame index of an input view


@dataclass
class SupervisionSet:
    inputs: List[View] = field(default_factory=list)
    generated: List[View] = field(default_factory=list)

    def __len__(self):
        return len(self.inputs) + len(self.generated)

    def add_generated(self, views):
        for v in views:
            if v.kind != "generated" or v.cycle is None:
                raise ValueError("generated views must carry the cycle that produced them")
        self.generated.extend(views)

    def manifest(self):
        return {"inputs": [v.index for v in self.inputs],
                "generated": [{"cycle": v.cycle} for v in self.generated]}


def scene_extent(cameras) -> float:
    """1.1 x the largest distance of a camera center from their mean (1.0 for one camera)."""
    centers = np.stack([c.center for c in cameras])
    r = float(np.linalg.norm(centers - centers.mean(axis=0), axis=1).max())
    return 1.1 * r if r > 1e-9 else 1.0


# --- initialization -----------------------------------------------------

def visible_in_views(points, cameras, keep_masks=None, near=DEFAULT_SETTINGS.near):
    """Boolean per point: projects inside at least one view (and its keep-mask)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    seen = np.zeros(len(points), dtype=bool)
    for i, cam in enumerate(cameras):
        px, z = cam.project(points)
        with np.errstate(invalid="ignore"):
            x = np.floor(px[:, 0] + 0.5)
            y = np.floor(px[:, 1] + 0.5)
            ok = (z > near) & (x >= 0) & (x < cam.width) & (y >= 0) & (y < cam.height)
        if keep_masks is not None and keep_masks[i] is not None:
            xi = np.where(ok, x, 0).astype(np.int64)
            yi = np.where(ok, y, 0).astype(np.int64)
            ok &= keep_masks[i][yi, xi]
        seen |= ok
    return seen


def knn_scales(points, k=3):
    """Mean distance of each point to its ``min(k, n-1)`` nearest neighbors."""
    n = len(points)
    kk = min(k, n - 1)
    if kk < 1:
        return None
    d, _ = cKDTree(points).query(points, k=kk + 1)
    return d[:, 1:].mean(axis=1)


def init_from_points(points, colors, cameras, keep_masks=None, opacity=0.1, sh_degree=0) -> SplatCloud:
    """One disk per point visible from a training view.

    Disks face the nearest camera and take the mean distance to the three
    nearest retained neighbors as isotropic scale. A lone point gets the
    footprint of one pixel at its depth in the nearest camera.

    Raises:
        EmptyPoints: no points given, or none visible.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise EmptyPoints("initialization needs at least one point")
    keep = visible_in_views(points, cameras, keep_masks)
    if not keep.any():
        raise EmptyPoints("no initialization point is visible from the training views")
    pts, cols = points[keep], colors[keep]
    centers = np.stack([c.center for c in cameras])
    dist = np.linalg.norm(pts[:, None, :] - centers[None], axis=2)
    nearest = np.argmin(dist, axis=1)
    to_cam = centers[nearest] - pts
    normals = to_cam / np.maximum(np.linalg.norm(to_cam, axis=1, keepdims=True), 1e-12)
    scales = knn_scales(pts)
    if scales is None:
        cam = cameras[int(nearest[0])]
        scales = np.array([cam.world_to_camera(pts)[0, 2] / cam.fx])
    scales = np.maximum(scales, 1e-6)
    return SplatCloud.from_points(pts, np.clip(cols, 0, 1), normals, scales, opacity, sh_degree)


# --- one optimization step --------------------------------------------------

def _rect_window(keep):
    """(x0, y0, w, h) when ``keep`` is exactly one filled rectangle, else None."""
    ys, xs = np.nonzero(keep)
    if ys.size == 0:
        return None
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    if ys.size != (y1 - y0) * (x1 - x0):
        return None
    return int(x0), int(y0), int(x1 - x0), int(y1 - y0)


def generation_weight(k, config: FusionConfig) -> float:
    return config.lambda_max * lambda_schedule(k, config.schedule)


def train_step(cloud: SplatCloud, item: View, k: int, config: FusionConfig, optimizer: Adam) -> float:
    """Render, score, backpropagate and take one optimizer step.

    Input views use weight 0 on the generation term; generated views use
    ``lambda_max * lambda(k)``. A generated view whose weight is 0 leaves
    the cloud untouched. Rectangular keep-masks are trained on the cropped
    camera, which gives the same loss and gradients as the masked full frame.

    Returns:
        The loss value.
    """
    if len(cloud) == 0:
        return 0.0
    cam, frame, keep = item.camera, item.frame, item.keep
    if item.kind == "generated":
        lam = generation_weight(k, config)
        if lam == 0.0:
            return 0.0
    if keep is not None:
        win = _rect_window(keep)
        if win is not None:
            cam, frame, keep = cam.cropped(*win), frame.crop(*win), None
    out = render(cloud, cam, config.background)
    if item.kind == "input":
        res = total_loss(out, input_gt=frame, weights=config.weights, lam=0.0, input_mask=keep,
                         mono_recon=config.mono_recon)
    else:
        res = total_loss(out, generated=frame, weights=config.weights, lam=lam,
                         mono_gen=config.mono_gen)
    grads = render_backward(cloud, cam, out, res.d_rgb, res.d_depth)
    accumulate_stats(cloud, grads)
    optimizer.step(cloud, grads)
    return res.value


# --- fusion cycle -----------------------------------------------------------

@dataclass
class CycleReport:
    cycle: int
    iteration: int
    restored: int = 0
    inserted: int = 0
    size_before: int = 0
    size_after: int = 0
    skipped: Optional[str] = None
    metrics: Optional[dict] = None


def _masked_reference(view: View) -> FrameRGBD:
    if view.keep is None:
        return view.frame.copy()
    k = view.keep
    f = view.frame
    return FrameRGBD(f.rgb * k[..., None], f.depth * k, np.where(k, f.transmittance, 1.0), f.valid & k)


def expand_content(cloud: SplatCloud, views: List[View], config: FusionConfig, tau_d: float) -> int:
    """Back-project unreliable restored pixels of ``views`` into ``cloud``.

    Each view is checked against the cloud as it stands after the previous
    views' insertions, with the disks inserted in this pass treated as
    opaque so overlapping views do not insert the same surface twice.
    """
    probe = cloud.copy()
    stride = config.insert_stride
    added = 0
    for v in views:
        seen = render(probe, v.camera, config.background)
        mask = detect_unreliable(seen, v.frame.depth, config.expansion, tau_d) & v.frame.valid
        h, w = mask.shape
        max_new = None
        if mask.mean() > config.unreliable_cap:
            max_new = int(config.unreliable_cap * h * w / stride ** 2)
        before = len(cloud)
        n = backproject_insert(cloud, v.frame, v.camera, mask, stride, max_new)
        if n:
            new = cloud.copy()
            new.select(np.arange(before, len(cloud)))
            new.opacities[:] = 1.0
            probe.extend(new)
        added += n
    return added


def fusion_cycle(cloud: SplatCloud, supervision: SupervisionSet, oracle: Oracle, k: int,
                 config: FusionConfig, cycle_index: int, extent: float = 1.0) -> CycleReport:
    """Render novel fragments, restore them, grow supervision and the scene.

    Oracle failures (unavailable or bad response) skip the cycle; training
    goes on with the supervision set unchanged.
    """
    report = CycleReport(cycle_index, k, size_before=len(cloud), size_after=len(cloud))
    inputs = supervision.inputs
    cams = [v.camera for v in inputs]
    frags = []
    for f in range(config.fragments_per_cycle):
        frags.extend(sample_fusion_trajectories(
            cams, cycle_index * config.fragments_per_cycle + f, config.seed,
            config.fragment_length, config.spiral_radius))
    new_views = []
    for traj in frags:
        rendered = [render(cloud, c, config.background) for c in traj]
        ref = select_reference(cams, traj.cameras)
        req = OracleRequest([FrameRGBD(r.rgb, r.depth, r.transmittance, r.valid) for r in rendered],
                            list(traj.cameras), _masked_reference(inputs[ref]), inputs[ref].camera)
        try:
            resp = oracle.restore(req)
            resp.validate(req)
        except (OracleUnavailable, BadResponse) as exc:
            log.warning("fusion cycle %d at iteration %d skipped: %s", cycle_index, k, exc)
            report.skipped = str(exc)
            return report
        for cam, ren, res in zip(traj.cameras, rendered, resp.frames):
            aligned = align_depth(res.depth, ren.depth, ren.valid)
            valid = res.valid & (aligned > 0)
            frame = FrameRGBD(res.rgb, np.where(valid, aligned, 0.0), np.where(valid, 0.0, 1.0), valid)
            new_views.append(View(cam, frame, None, "generated", cycle_index))
    supervision.add_generated(new_views)
    report.restored = len(new_views)
    if config.expand and config.lambda_max > 0:
        tau_d = config.expansion.tau_D if config.expansion.tau_D is not None else 0.1 * extent
        report.inserted = expand_content(cloud, new_views, config, tau_d)
    report.size_after = len(cloud)
    return report


# --- training loop ----------------------------------------------------------

class FusionTrainer:
    """Stateful driver behind :func:`run_training`.

    Args:
        cloud: initial scene (modified in place).
        inputs: input views.
        config: FusionConfig.
        oracle: restoration oracle, or None to train without fusion.
        eval_views: (camera, frame) pairs scored after every cycle and at the end.
    """

    def __init__(self, cloud: SplatCloud, inputs: List[View], config: FusionConfig,
                 oracle: Optional[Oracle] = None, eval_views=None, extent: Optional[float] = None,
                 on_cycle: Optional[Callable] = None):
        if not inputs:
            raise ValueError("training needs at least one input view")
        self.cloud = cloud
        self.config = config
        self.oracle = oracle
        self.eval_views = eval_views or []
        self.supervision = SupervisionSet(list(inputs), [])
        self.extent = scene_extent([v.camera for v in inputs]) if extent is None else extent
        self.on_cycle = on_cycle
        view_seq, split_seq = np.random.SeedSequence(config.seed).spawn(2)
        self.view_rng = np.random.default_rng(view_seq)
        self.split_rng = np.random.default_rng(split_seq)
        lr = config.lr
        self.optimizer = Adam({"position": lr.position * self.extent, "opacity": lr.opacity,
                               "scale": lr.scale, "rotation": lr.rotation, "sh": lr.sh})
        self.queues = {"input": [], "generated": []}
        self.iteration = 0
        self.cycles: List[CycleReport] = []
        self.losses: List[float] = []
        self.cycle_at = set(config.cycle_iterations()) if oracle is not None else set()

    def _next(self, group):
        pool = self.supervision.inputs if group == "input" else self.supervision.generated
        q = self.queues[group]
        if not q:
            q.extend(self.view_rng.permutation(len(pool)).tolist())
        return pool[q.pop()]

    def choose(self, k) -> View:
        """Input views only until generated views exist and carry weight, then 2:1."""
        if self.supervision.generated and generation_weight(k, self.config) > 0:
            if self.view_rng.random() >= self.config.input_share:
                return self._next("generated")
        return self._next("input")

    def evaluate(self):
        if not self.eval_views:
            return None
        rows = evaluate_views(self.cloud, [c for c, _ in self.eval_views],
                              [f for _, f in self.eval_views], range(len(self.eval_views)),
                              self.config.background)
        return summarize(rows)

    def densify_due(self, k):
        cfg = self.config
        step = k + 1
        return step % cfg.densify.interval == 0 and (cfg.densify_until is None or step <= cfg.densify_until)

    def step(self):
        k = self.iteration
        cfg = self.config
        if k in self.cycle_at:
            rep = fusion_cycle(self.cloud, self.supervision, self.oracle, k, cfg, len(self.cycles),
                               self.extent)
            if cfg.eval_each_cycle:
                rep.metrics = self.evaluate()
            self.cycles.append(rep)
            log.info("cycle %d @%d: restored %d, inserted %d, size %d -> %d", rep.cycle, k,
                     rep.restored, rep.inserted, rep.size_before, rep.size_after)
            if self.on_cycle is not None:
                self.on_cycle(self, rep)
        self.optimizer.lrs["position"] = position_lr(
            k, cfg.total_iters, cfg.lr.position * self.extent, cfg.lr.position_final * self.extent)
        item = self.choose(k)
        self.losses.append(train_step(self.cloud, item, k, cfg, self.optimizer))
        if self.densify_due(k):
            cands = select_candidates(self.cloud, cfg.densify)
            densify_apply(self.cloud, cands, cfg.densify, self.split_rng)
            prune(self.cloud, cfg.densify)
        self.iteration += 1

    def run(self, checkpoint_dir=None):
        from .checkpoint import save_checkpoint

        cfg = self.config
        while self.iteration < cfg.total_iters:
            self.step()
            if checkpoint_dir is not None and cfg.checkpoint_interval > 0 and \
                    self.iteration % cfg.checkpoint_interval == 0:
                save_checkpoint(checkpoint_dir, self)
        return self.cloud, self.metrics()

    def metrics(self):
        final = self.evaluate()
        return {
            "iterations": self.iteration,
            "oracle_cycles": len([c for c in self.cycles if c.skipped is None]),
            "cycles": [vars(c) for c in self.cycles],
            "final": final,
            "cloud_size": len(self.cloud),
            "supervision": self.supervision.manifest(),
        }


def dataset_views(dataset, manifest=None):
    """(input views, eval pairs) from a SceneDataset and an optional split manifest."""
    manifest = manifest if manifest is not None else dataset.manifest
    if manifest is None:
        inputs = [View(c, f, None, "input", index=i) for i, (c, f) in enumerate(zip(dataset.cameras, dataset.frames))]
        return inputs, []
    inputs = []
    for i in manifest.train_indices:
        win = manifest.window(i)
        keep = None if win is None else manifest.keep_mask(i)
        inputs.append(View(dataset.cameras[i], dataset.frames[i], keep, "input", index=i))
    evals = [(dataset.cameras[i], dataset.frames[i]) for i in manifest.test_indices]
    return inputs, evals


def run_training(dataset, oracle: Optional[Oracle], config: FusionConfig, manifest=None,
                 checkpoint_dir=None, on_cycle=None):
    """Initialize from the dataset's points and train.

    Returns:
        (cloud, metrics dict with per-cycle reports and final held-out PSNR/SSIM)
    """
    inputs, evals = dataset_views(dataset, manifest)
    cloud = init_from_points(dataset.points, dataset.colors, [v.camera for v in inputs],
                             [v.keep for v in inputs], config.init_opacity, config.sh_degree)
    trainer = FusionTrainer(cloud, inputs, config, oracle if config.fusion else None, evals,
                            on_cycle=on_cycle)
    return trainer.run(checkpoint_dir)
