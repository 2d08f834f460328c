"""Checkpoint evaluation over a dataset manifest.

Full images are fed to the model (no crops). Every row carries the bicubic
baseline alongside the model's numbers so improvement deltas read directly
from the CSV; the final row aggregates means over the evaluated pairs.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint
from .config import parse_config_text
from .degrade import bicubic_resize
from .errors import ConfigurationError, InvalidInputError
from .io import load_manifest, save_png16
from .metrics import metric_report
from .model import build_model

log = logging.getLogger(__name__)

CSV_FIELDS = ("pair_id", "psnr", "ssim", "temp_mae", "grad_mae",
              "psnr_bicubic", "ssim_bicubic", "temp_mae_bicubic", "grad_mae_bicubic")


@dataclass
class EvalResult:
    rows: list[dict] = field(default_factory=list)
    mean: dict = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)
    csv_path: Path | None = None


def load_model_from_checkpoint(ckpt_path: str | Path, dtype: torch.dtype = torch.float32):
    """Rebuild the network a checkpoint was trained with and load its weights."""
    from .checkpoint import apply_checkpoint

    ckpt = load_checkpoint(ckpt_path)
    cfg = parse_config_text(ckpt.config_text, source=str(ckpt_path))
    model = build_model(cfg.model, seed=ckpt.seed, dtype=dtype)
    apply_checkpoint(ckpt, model)
    model.eval()
    return model, cfg


def _model_row(model, pair, dtype: torch.dtype) -> dict:
    needs_t = model.cfg.has_thermal_branch
    needs_o = model.cfg.has_optical_branch

    def chw(img):
        return torch.from_numpy(img.transpose(2, 0, 1)[None]).to(dtype)

    with torch.no_grad():
        sr = model(chw(pair.thermal_lr) if needs_t else None,
                   chw(pair.optical) if needs_o else None)["sr"]
    sr_img = sr[0].permute(1, 2, 0).cpu().numpy().astype(np.float64)
    hr = pair.thermal_hr
    m = metric_report(sr_img, hr)
    base = np.clip(bicubic_resize(pair.thermal_lr, hr.shape[0], hr.shape[1]), 0.0, 1.0)
    b = metric_report(base, hr)
    return {
        "psnr": m.psnr, "ssim": m.ssim, "temp_mae": m.temp_mae, "grad_mae": m.grad_mae,
        "psnr_bicubic": b.psnr, "ssim_bicubic": b.ssim,
        "temp_mae_bicubic": b.temp_mae, "grad_mae_bicubic": b.grad_mae,
        "_sr": sr_img,
    }


def evaluate(ckpt_path: str | Path, manifest_path: str | Path,
             out_dir: str | Path | None = None, save_maps: bool = False) -> EvalResult:
    model, cfg = load_model_from_checkpoint(ckpt_path)
    manifest = load_manifest(manifest_path)
    if cfg.model.scale != manifest.scale:
        raise ConfigurationError(
            f"checkpoint scale x{cfg.model.scale} does not match manifest scale "
            f"x{manifest.scale}"
        )
    out = EvalResult()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    for index in range(len(manifest)):
        pair_id = manifest.records[index].pair_id
        try:
            pair = manifest.load_pair(index)
            row = _model_row(model, pair, torch.float32)
        except InvalidInputError as exc:
            log.warning("skipping pair %s: %s", pair_id, exc)
            out.skipped.append(pair_id)
            continue
        sr_img = row.pop("_sr")
        row = {"pair_id": pair_id, **row}
        out.rows.append(row)
        if save_maps and out_dir is not None:
            from .metrics import difference_maps

            maps = difference_maps(sr_img, pair.thermal_hr)
            save_png16(out_dir / f"{pair_id}_temp_diff.png", maps["temp_map"])
            save_png16(out_dir / f"{pair_id}_grad_diff.png",
                       np.clip(maps["grad_map"], 0.0, 1.0))

    if out.rows:
        out.mean = {"pair_id": "mean"}
        for key in CSV_FIELDS[1:]:
            out.mean[key] = float(np.mean([r[key] for r in out.rows]))
    if out_dir is not None:
        out.csv_path = out_dir / "eval_metrics.csv"
        with open(out.csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            writer.writeheader()
            for row in out.rows:
                writer.writerow({k: _fmt(v) for k, v in row.items()})
            if out.mean:
                writer.writerow({k: _fmt(v) for k, v in out.mean.items()})
    return out


def _fmt(v):
    return f"{v:.6f}" if isinstance(v, float) else v
