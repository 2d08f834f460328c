"""Run both ablation grids (component toggles and branch wirings) on a small
synthetic dataset and print the result tables.

    python3 scripts/run_ablations.py --out runs/ablations --steps 200
"""

import argparse
from pathlib import Path

from thermosr.ablation import run_ablation
from thermosr.config import parse_config_text
from thermosr.synth import SceneConfig

from make_dataset import build_split


def show(rows: list[dict]) -> None:
    for row in rows:
        extras = " ".join(f"{k}={row[k]}" for k in row
                          if k.startswith("use_") or k == "branch_mode")
        print(f"  {row['variant']:>18s}  params {row['params']:>8d}  "
              f"psnr {row['psnr']:.3f}  ssim {row['ssim']:.4f}  {extras}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--pairs", type=int, default=4)
    ap.add_argument("--steps", type=int, default=200, help="train budget per variant")
    ap.add_argument("--size", type=int, default=128, help="scene size in pixels")
    args = ap.parse_args()

    root = Path(args.out)
    manifest = root / "data" / "manifest.json"
    if not manifest.exists():
        build_split(root / "data", range(args.pairs),
                    SceneConfig(size=args.size, steps=8, n_shapes=8))

    base = parse_config_text("preset = desk")
    base.data = str(manifest)
    base.max_steps = args.steps
    base.patch = 24
    base.validate()

    for grid in ("components", "collaboration"):
        print(f"{grid} grid:")
        show(run_ablation(base, grid, out_dir=root / grid))
        print(f"  table: {root / grid / f'ablation_{grid}.csv'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
