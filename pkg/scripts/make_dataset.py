"""Generate a train/holdout dataset of synthetic optical/thermal scene pairs.

Writes two sibling directories, each with its own manifest, so experiments can
fit on one split and report on the other:

    python3 scripts/make_dataset.py --out data/scenes --train 8 --holdout 2
"""

import argparse
from pathlib import Path

from thermosr.degrade import DegradationSpec
from thermosr.io import save_scene, write_manifest
from thermosr.synth import SceneConfig, generate_pair


def build_split(out_dir: Path, seeds, cfg: SceneConfig) -> Path:
    records = []
    for seed in seeds:
        pair = generate_pair(seed, cfg)
        records.append(save_scene(pair, out_dir, f"pair{seed:04d}"))
    manifest = out_dir / "manifest.json"
    write_manifest(manifest, cfg.scale, cfg.spec().provenance(), records)
    return manifest


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="dataset root directory")
    ap.add_argument("--train", type=int, default=8, help="pairs in the train split")
    ap.add_argument("--holdout", type=int, default=2, help="pairs in the holdout split")
    ap.add_argument("--seed0", type=int, default=0, help="first scene seed")
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--scale", type=int, default=4, choices=(4, 8))
    ap.add_argument("--steps", type=int, default=12)
    ap.add_argument("--shapes", type=int, default=12)
    ap.add_argument("--kind", default="bi", choices=("bi", "bd"))
    args = ap.parse_args()

    cfg = SceneConfig(size=args.size, scale=args.scale, steps=args.steps,
                      n_shapes=args.shapes,
                      degradation=DegradationSpec(args.kind, args.scale))
    root = Path(args.out)
    train_seeds = range(args.seed0, args.seed0 + args.train)
    hold_seeds = range(args.seed0 + args.train, args.seed0 + args.train + args.holdout)
    m_train = build_split(root / "train", train_seeds, cfg)
    print(f"train: {args.train} pairs, manifest {m_train}")
    if args.holdout:
        m_hold = build_split(root / "holdout", hold_seeds, cfg)
        print(f"holdout: {args.holdout} pairs, manifest {m_hold}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
