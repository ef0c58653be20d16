"""Command-line entry point: ``splatfuse <command> ...``.

Commands:
    synth-scene  build a synthetic dataset directory
    split        write a split manifest (eval or datagen protocol)
    gen-pairs    masked training, then artifact/ground-truth frame pairs
    train        (fusion) training with a chosen oracle
    render       render a cloud along a camera list
    eval         held-out PSNR/SSIM for a cloud
    oracle-mock  serve a local oracle over HTTP

Training settings come from defaults, then ``--config`` (JSON, same keys as
FusionConfig), then command-line flags. Exit status is 2 for usage errors
and 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import (BadResponse, BadRotation, BindFailed, EmptyMask, EmptyPoints, InvalidDepth,
                     MalformedFile, NoSupervision, OracleUnavailable, RatioUnsupported,
                     SchemaViolation, ShapeMismatch)

log = logging.getLogger("splatfuse")

RUNTIME_ERRORS = (OSError, MalformedFile, SchemaViolation, BadRotation, RatioUnsupported, EmptyPoints,
                  EmptyMask, InvalidDepth, NoSupervision, ShapeMismatch, OracleUnavailable,
                  BadResponse, BindFailed)


class UsageError(Exception):
    pass


# --- helpers ----------------------------------------------------------------

def _load_config(args):
    from .fusion.config import FusionConfig

    cfg = FusionConfig.load(args.config) if getattr(args, "config", None) else FusionConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "iters", None) is not None:
        overrides["total_iters"] = args.iters
    if getattr(args, "warmup", None) is not None:
        overrides["warmup_iters"] = args.warmup
    if getattr(args, "cycle_interval", None) is not None:
        overrides["cycle_interval"] = args.cycle_interval
    if getattr(args, "lambda_max", None) is not None:
        overrides["lambda_max"] = args.lambda_max
    if overrides:
        cfg = FusionConfig.from_dict(overrides, base=cfg)
    return cfg


def _scene_from(path):
    """SyntheticScene from a dataset directory or a scene JSON file."""
    from .io.synthetic import SyntheticScene, SyntheticSceneSpec

    p = Path(path)
    if p.is_dir():
        p = p / "scene.json"
    if not p.exists():
        raise UsageError(f"no synthetic scene definition at {p}")
    return SyntheticScene(SyntheticSceneSpec.from_dict(json.loads(p.read_text())))


def _make_oracle(spec, dataset_dir):
    from .oracle import GroundTruthOracle, IdentityOracle, RemoteOracle

    if spec == "off":
        return None
    if spec == "identity":
        return IdentityOracle()
    if spec == "gt":
        return GroundTruthOracle(_scene_from(dataset_dir))
    if spec.startswith("gt:"):
        return GroundTruthOracle(_scene_from(spec[3:]))
    if spec.startswith("remote:"):
        return RemoteOracle(spec[len("remote:"):])
    raise UsageError(f"unknown oracle {spec!r}; use identity, gt, gt:<scene>, remote:<url> or off")


def _manifest_for(args, ds):
    from .protocol import SplitManifest, eval_manifest

    if getattr(args, "manifest", None):
        return SplitManifest.load(args.manifest)
    if getattr(args, "ratio", None) is not None:
        h, w = ds.frames[0].shape
        return eval_manifest(len(ds), w, h, args.ratio, args.path_seed)
    return ds.manifest


# --- commands ---------------------------------------------------------------

def cmd_synth_scene(args):
    from .io.dataset import save_dataset
    from .io.synthetic import SyntheticSceneSpec, default_scene_spec, synth_scene

    if args.spec == "default":
        spec = default_scene_spec(seed=args.seed or 0, width=args.width, height=args.height,
                                  num_frames=args.frames)
    else:
        spec = SyntheticSceneSpec.from_dict(json.loads(Path(args.spec).read_text()))
        if args.seed is not None:
            spec.seed = args.seed
    ds, _ = synth_scene(spec)
    save_dataset(args.out, ds)
    print(f"wrote {len(ds)} frames and {len(ds.points)} points to {args.out}")
    return 0


def cmd_split(args):
    from .io.dataset import load_dataset
    from .protocol import datagen_manifest, eval_manifest

    ds = load_dataset(args.dataset)
    h, w = ds.frames[0].shape
    if args.mode == "eval":
        man = eval_manifest(len(ds), w, h, args.ratio, args.seed)
    else:
        man = datagen_manifest(len(ds), w, h, args.ratio, args.seed)
    out = Path(args.out) if args.out else Path(args.dataset) / "split.json"
    man.save(out)
    print(f"wrote {out}: {len(man.train_indices)} train, {len(man.test_indices)} test")
    return 0


def cmd_gen_pairs(args):
    from .core.render import render
    from .io.cameras import write_cameras
    from .io.dataset import load_dataset
    from .io.images import write_frame
    from .io.ply import save_splats
    from .fusion import FusionConfig, run_training
    from .protocol import datagen_manifest

    ds = load_dataset(args.dataset)
    cfg = FusionConfig.from_dict({"fusion": False}, base=_load_config(args))
    h, w = ds.frames[0].shape
    man = datagen_manifest(len(ds), w, h, args.ratio, cfg.seed)
    cloud, _ = run_training(ds, None, cfg, manifest=man)
    out = Path(args.out)
    (out / "artifact").mkdir(parents=True, exist_ok=True)
    (out / "gt").mkdir(parents=True, exist_ok=True)
    for i, (cam, gt) in enumerate(zip(ds.cameras, ds.frames)):
        write_frame(out / "artifact" / f"{i:04d}", render(cloud, cam, cfg.background))
        write_frame(out / "gt" / f"{i:04d}", gt)
    write_cameras(out / "cameras.json", ds.cameras)
    man.save(out / "split.json")
    save_splats(out / "masked_cloud.ply", cloud)
    print(f"wrote {len(ds)} artifact/gt pairs to {out} (corner {man.corner})")
    return 0


def cmd_train(args):
    from .io.dataset import load_dataset
    from .io.ply import save_splats
    from .fusion import run_training

    ds = load_dataset(args.dataset)
    cfg = _load_config(args)
    oracle = _make_oracle(args.oracle, args.dataset)
    if oracle is None:
        from .fusion import FusionConfig
        cfg = FusionConfig.from_dict({"fusion": False}, base=cfg)
    man = _manifest_for(args, ds)
    cloud, metrics = run_training(ds, oracle, cfg, manifest=man, checkpoint_dir=args.checkpoint_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_splats(out / "cloud.ply", cloud)
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, default=float))
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    final = metrics.get("final")
    summary = f", held-out PSNR {final['psnr']:.2f} dB" if final else ""
    print(f"trained {metrics['iterations']} iterations, {metrics['cloud_size']} disks, "
          f"{metrics['oracle_cycles']} fusion cycles{summary}; wrote {out / 'cloud.ply'}")
    return 0


def cmd_render(args):
    from .core.render import render
    from .io.cameras import read_cameras
    from .io.images import write_frame
    from .io.ply import load_splats

    cloud = load_splats(args.cloud)
    cams = read_cameras(args.trajectory)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bg = tuple(args.background)
    for i, cam in enumerate(cams):
        write_frame(out / f"{i:04d}", render(cloud, cam, bg))
    print(f"rendered {len(cams)} frames to {out}")
    return 0


def cmd_eval(args):
    from .io.dataset import load_dataset
    from .io.evaluate import run_eval
    from .io.ply import load_splats
    from .protocol import SplitManifest

    ds = load_dataset(args.dataset)
    res = run_eval(ds, load_splats(args.cloud), SplitManifest.load(args.manifest), args.out)
    print(f"{len(res['frames'])} test frames: PSNR {res['mean']['psnr']:.3f} dB, "
          f"SSIM {res['mean']['ssim']:.4f}")
    return 0


def cmd_oracle_mock(args):
    from .oracle import IdentityOracle, serve_mock

    if args.backend == "identity":
        oracle = IdentityOracle()
    elif args.backend.startswith("gt:"):
        oracle = _make_oracle(args.backend, None)
    else:
        raise UsageError("--backend must be identity or gt:<scene dir or scene.json>")
    print(f"serving {oracle.name} oracle on {args.bind}", flush=True)
    serve_mock(args.bind, oracle)
    return 0


# --- parser -----------------------------------------------------------------

def _train_flags(p):
    p.add_argument("--config", help="JSON file with FusionConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int, help="total iterations")
    p.add_argument("--warmup", type=int, help="warm-up iterations")
    p.add_argument("--cycle-interval", type=int, help="iterations between fusion cycles")


def build_parser():
    p = argparse.ArgumentParser(prog="splatfuse", description="Gaussian-disk splatting with cyclic fusion")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-scene", help="build a synthetic dataset")
    s.add_argument("spec", help="scene spec JSON, or 'default'")
    s.add_argument("out")
    s.add_argument("--seed", type=int)
    s.add_argument("--width", type=int, default=64)
    s.add_argument("--height", type=int, default=64)
    s.add_argument("--frames", type=int, default=16)
    s.set_defaults(func=cmd_synth_scene)

    s = sub.add_parser("split", help="write a split manifest")
    s.add_argument("dataset")
    s.add_argument("--mode", choices=["eval", "datagen"], default="eval")
    s.add_argument("--ratio", type=float, default=0.25)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="manifest path (default: <dataset>/split.json)")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("gen-pairs", help="artifact/ground-truth pairs from masked training")
    s.add_argument("dataset")
    s.add_argument("out")
    s.add_argument("--ratio", type=float, default=0.25, help="frame downsampling ratio")
    _train_flags(s)
    s.set_defaults(func=cmd_gen_pairs)

    s = sub.add_parser("train", help="train a scene")
    s.add_argument("dataset")
    s.add_argument("--oracle", default="off", help="identity, gt, gt:<scene>, remote:<url> or off")
    s.add_argument("--out", default="train_out")
    s.add_argument("--lambda-max", type=float, help="scale of the generation-loss schedule")
    s.add_argument("--manifest", help="split manifest (default: <dataset>/split.json if present)")
    s.add_argument("--ratio", type=float, help="build an eval split with this ratio instead")
    s.add_argument("--path-seed", type=int, default=0, help="moving-mask seed for --ratio")
    s.add_argument("--checkpoint-dir")
    _train_flags(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("render", help="render a cloud along cameras")
    s.add_argument("cloud")
    s.add_argument("trajectory", help="camera JSON file")
    s.add_argument("out")
    s.add_argument("--background", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("eval", help="held-out PSNR/SSIM")
    s.add_argument("dataset")
    s.add_argument("cloud")
    s.add_argument("manifest")
    s.add_argument("out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("oracle-mock", help="serve a local oracle over HTTP")
    s.add_argument("--backend", default="identity", help="identity or gt:<scene dir or scene.json>")
    s.add_argument("--bind", default="127.0.0.1:8765")
    s.set_defaults(func=cmd_oracle_mock)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"splatfuse: error: {exc}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as exc:
        print(f"splatfuse: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"splatfuse: error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
