"""Command-line interface.

Subcommands: simulate, degrade, train, eval, ablate, metrics. All failures
exit nonzero with a single `error: ...` line on stderr so callers can parse
outcomes mechanically.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidInputError


def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ConfigurationError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(text)]


def _load_image(path: Path) -> np.ndarray:
    from .io import load_png8, load_tfd

    if path.suffix == ".tfd":
        return load_tfd(path)
    if path.suffix == ".png":
        return load_png8(path)
    raise InvalidInputError(f"unsupported image format {path.suffix!r} (use .tfd or .png)")


def _save_image(path: Path, img: np.ndarray) -> None:
    from .io import save_png8, save_tfd

    if path.suffix == ".tfd":
        save_tfd(path, img)
    elif path.suffix == ".png":
        save_png8(path, np.clip(img, 0.0, 1.0))
    else:
        raise InvalidInputError(f"unsupported image format {path.suffix!r} (use .tfd or .png)")


def cmd_simulate(args) -> int:
    from .degrade import DegradationSpec
    from .io import save_scene, write_manifest
    from .synth import SceneConfig, generate_pair

    spec = DegradationSpec(args.kind, args.scale)
    cfg = SceneConfig(size=args.size, scale=args.scale, steps=args.steps,
                      n_shapes=args.shapes, degradation=spec)
    out = Path(args.out)
    records = []
    for seed in _parse_seeds(args.seeds):
        pair = generate_pair(seed, cfg)
        records.append(save_scene(pair, out, f"pair{seed:04d}"))
    write_manifest(out / "manifest.json", args.scale, spec.provenance(), records)
    print(f"wrote {len(records)} pairs and manifest.json to {out}")
    return 0


def cmd_degrade(args) -> int:
    from .degrade import DegradationSpec, degrade

    img = _load_image(Path(args.input))
    spec = DegradationSpec(args.kind, args.scale)
    _save_image(Path(args.out), degrade(img, spec))
    print(f"degraded {args.input} ({args.kind} x{args.scale}) -> {args.out}")
    return 0


def cmd_train(args) -> int:
    from .config import parse_config
    from .train import train

    cfg = parse_config(args.config)
    result = train(cfg, resume=args.resume)
    tail = " (stopped early)" if result.stopped_early else ""
    print(f"trained {result.steps_run} steps{tail}, final loss {result.final_loss:.6g}, "
          f"checkpoint {result.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    from .evaluate import evaluate

    report = evaluate(args.ckpt, args.manifest, out_dir=args.out, save_maps=args.maps)
    if not report.rows:
        print("error: no evaluable pairs in manifest", file=sys.stderr)
        return 1
    mean = report.mean
    print(f"pairs {len(report.rows)} (skipped {len(report.skipped)}) "
          f"psnr {mean['psnr']:.4f} ssim {mean['ssim']:.4f} "
          f"bicubic {mean['psnr_bicubic']:.4f}/{mean['ssim_bicubic']:.4f}")
    if report.csv_path is not None:
        print(f"metrics table: {report.csv_path}")
    return 0


def cmd_ablate(args) -> int:
    from .ablation import run_ablation
    from .config import parse_config

    base = parse_config(args.config)
    rows = run_ablation(base, args.grid, out_dir=args.out)
    for row in rows:
        psnr = row["psnr"]
        shown = f"{psnr:.4f}" if psnr is not None else "n/a"
        print(f"{row['variant']:>24s}  params {row['params']:>9d}  psnr {shown}")
    return 0


def cmd_metrics(args) -> int:
    from .metrics import metric_report

    a = _load_image(Path(args.a))
    b = _load_image(Path(args.b))
    report = metric_report(a, b)
    for key in ("psnr", "ssim", "temp_mae", "grad_mae"):
        print(f"{key} {getattr(report, key):.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermosr",
        description="Optics-guided thermal super-resolution experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic scene pairs plus a manifest")
    p.add_argument("--seeds", required=True, help="single seed or inclusive range a..b")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--scale", type=int, default=4, choices=(4, 8))
    p.add_argument("--steps", type=int, default=12, help="heat simulation steps")
    p.add_argument("--shapes", type=int, default=12, help="shapes per scene")
    p.add_argument("--kind", default="bi", choices=("bi", "bd"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("degrade", help="downscale an HR image with the BI/BD pipeline")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--kind", default="bi", choices=("bi", "bd"))
    p.add_argument("--scale", type=int, default=4, choices=(4, 8))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint against a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None, help="directory for the CSV (and maps)")
    p.add_argument("--maps", action="store_true", help="also write difference-map PNGs")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation grid")
    p.add_argument("--grid", required=True, choices=("components", "collaboration"))
    p.add_argument("--config", required=True, help="base experiment config")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("metrics", help="compare two images")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, InvalidInputError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
