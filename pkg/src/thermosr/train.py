"""Training loop.

Determinism comes from counter-derived randomness rather than carried
generator state: the pair order for epoch e is drawn from a generator seeded
with (seed, 1, e) and the crops for step s from (seed, 2, s). Resuming from a
checkpoint therefore replays the exact tail of the interrupted run, and two
runs with the same seed produce identical loss sequences.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .checkpoint import apply_checkpoint, checkpoint_from, load_checkpoint, save_checkpoint
from .config import ExperimentConfig, config_to_text
from .degrade import crop_aligned_patches
from .errors import TrainingDivergedError
from .io import load_manifest
from .losses import total_loss
from .metrics import psnr_all
from .model import build_model

LOG_FIELDS = ("step", "epoch", "lr", "total", "rec", "region", "boundary", "lam")


@dataclass
class TrainResult:
    out_dir: Path
    checkpoint_path: Path
    log_path: Path
    steps_run: int
    final_loss: float
    stopped_early: bool = False
    final_psnr: float | None = None


def learning_rate(cfg: ExperimentConfig, epoch: int) -> float:
    return cfg.lr * 0.5 ** (epoch // cfg.lr_halving_period)


def _to_tensor(stack: list[np.ndarray], dtype: torch.dtype) -> torch.Tensor:
    arr = np.stack([a.transpose(2, 0, 1) for a in stack])
    return torch.from_numpy(arr).to(dtype)


def _mean_pair_psnr(model, pairs, dtype: torch.dtype) -> float:
    """Mean full-image PSNR of the model's HR estimate over `pairs`."""
    was_training = model.training
    model.eval()
    needs_t = model.cfg.has_thermal_branch
    needs_o = model.cfg.has_optical_branch
    vals = []
    with torch.no_grad():
        for pair in pairs:
            lr = _to_tensor([pair.thermal_lr], dtype) if needs_t else None
            op = _to_tensor([pair.optical], dtype) if needs_o else None
            sr = model(lr, op)["sr"][0].permute(1, 2, 0).cpu().numpy()
            vals.append(psnr_all(sr, pair.thermal_hr))
    if was_training:
        model.train()
    return float(np.mean(vals))


def _dump_diverged(out_dir: Path, step: int, batch: dict) -> Path:
    path = out_dir / f"diverged_step{step:06d}.npz"
    np.savez(path, **{k: v for k, v in batch.items() if v is not None})
    return path


def train(cfg: ExperimentConfig, resume: str | Path | None = None) -> TrainResult:
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg_text = config_to_text(cfg)
    (out_dir / "config.txt").write_text(cfg_text)

    manifest = load_manifest(cfg.data)
    pairs = manifest.pairs()
    n = len(pairs)
    steps_per_epoch = max(1, math.ceil(n / cfg.batch))
    total_steps = cfg.epochs * steps_per_epoch
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)

    dtype = torch.float64 if cfg.dtype == "float64" else torch.float32
    model = build_model(cfg.model, seed=cfg.seed, dtype=dtype)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=cfg.lr,
        betas=(cfg.optimizer.beta1, cfg.optimizer.beta2), eps=cfg.optimizer.eps,
    )

    start_step = 0
    if resume is not None:
        ckpt = load_checkpoint(resume)
        apply_checkpoint(ckpt, model, optimizer, expected_config_text=cfg_text)
        start_step = ckpt.step

    needs_t = cfg.model.has_thermal_branch
    needs_o = cfg.model.has_optical_branch
    mc_aux = cfg.loss.resolve_mc_aux(cfg.model.branch_mode)
    lam = cfg.loss.lam

    log_path = out_dir / "log.csv"
    eval_path = out_dir / "eval.csv"
    fresh_log = not (start_step and log_path.exists())
    log_fh = open(log_path, "w" if fresh_log else "a", newline="")
    log = csv.writer(log_fh)
    if fresh_log:
        log.writerow(LOG_FIELDS)
    eval_fh = None

    model.train()
    final_loss = float("nan")
    final_psnr = None
    stopped_early = False
    steps_done = start_step
    t0 = time.time()
    try:
        for step in range(start_step, total_steps):
            epoch, k = divmod(step, steps_per_epoch)
            lr_now = learning_rate(cfg, epoch)
            for group in optimizer.param_groups:
                group["lr"] = lr_now

            order = np.random.default_rng((cfg.seed, 1, epoch)).permutation(n)
            idx = order[k * cfg.batch:(k + 1) * cfg.batch]
            rng = np.random.default_rng((cfg.seed, 2, step))
            crops = []
            for i in idx:
                p = pairs[i]
                eff = min(cfg.patch, p.thermal_lr.shape[0], p.thermal_lr.shape[1])
                crops.append(crop_aligned_patches(p, eff, rng))

            lr_in = _to_tensor([c["lr"] for c in crops], dtype) if needs_t else None
            op_in = _to_tensor([c["optical"] for c in crops], dtype) if needs_o else None
            hr = _to_tensor([c["hr"] for c in crops], dtype)
            out = model(lr_in, op_in)
            # non-finite predictions would poison the histogram loss with
            # unusable indices, so divergence is caught on the raw output
            if not bool(torch.isfinite(out["sr"]).all()):
                dump = _dump_diverged(out_dir, step, {
                    "lr": None if lr_in is None else lr_in.cpu().numpy(),
                    "optical": None if op_in is None else op_in.cpu().numpy(),
                    "hr": hr.cpu().numpy(),
                    "indices": idx,
                })
                raise TrainingDivergedError(
                    f"non-finite prediction at step {step}; offending batch saved to {dump}"
                )

            parts = {"total": 0.0, "rec": 0.0, "region": 0.0, "boundary": 0.0}
            loss = hr.new_zeros(())
            for b, crop in enumerate(crops):
                terms = total_loss(out["sr"][b].permute(1, 2, 0),
                                   hr[b].permute(1, 2, 0), crop["masks"], cfg.loss)
                loss = loss + terms["total"]
                for key in parts:
                    parts[key] += float(terms[key].detach()) / len(crops)
            loss = loss / len(crops)
            if out["mc"] is not None and mc_aux > 0:
                loss = loss + mc_aux * (out["mc"] - hr).abs().mean()

            loss_val = float(loss.detach())
            if not math.isfinite(loss_val):
                dump = _dump_diverged(out_dir, step, {
                    "lr": None if lr_in is None else lr_in.cpu().numpy(),
                    "optical": None if op_in is None else op_in.cpu().numpy(),
                    "hr": hr.cpu().numpy(),
                    "indices": idx,
                })
                raise TrainingDivergedError(
                    f"non-finite loss at step {step}; offending batch saved to {dump}"
                )

            optimizer.zero_grad()
            loss.backward()
            if cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            optimizer.step()
            final_loss = loss_val
            steps_done = step + 1

            done = steps_done
            if cfg.log_every and (done % cfg.log_every == 0 or done == total_steps):
                log.writerow([done, epoch, f"{lr_now:.8g}", f"{parts['total']:.8g}",
                              f"{parts['rec']:.8g}", f"{parts['region']:.8g}",
                              f"{parts['boundary']:.8g}", f"{lam:.8g}"])
                log_fh.flush()
            if cfg.checkpoint_every and done % cfg.checkpoint_every == 0 and done < total_steps:
                snap = checkpoint_from(model, optimizer, step=done,
                                       epoch=done // steps_per_epoch,
                                       config_text=cfg_text, seed=cfg.seed)
                save_checkpoint(out_dir / f"ckpt_step{done:06d}.ckpt", snap)
            if cfg.eval_every and done % cfg.eval_every == 0:
                final_psnr = _mean_pair_psnr(model, pairs, dtype)
                if eval_fh is None:
                    fresh = not (start_step and eval_path.exists())
                    eval_fh = open(eval_path, "w" if fresh else "a", newline="")
                    if fresh:
                        csv.writer(eval_fh).writerow(["step", "psnr", "seconds"])
                csv.writer(eval_fh).writerow(
                    [done, f"{final_psnr:.6f}", f"{time.time() - t0:.1f}"])
                eval_fh.flush()
                if cfg.target_psnr is not None and final_psnr >= cfg.target_psnr:
                    stopped_early = True
                    break
    finally:
        log_fh.close()
        if eval_fh is not None:
            eval_fh.close()

    snap = checkpoint_from(model, optimizer, step=steps_done,
                           epoch=steps_done // steps_per_epoch,
                           config_text=cfg_text, seed=cfg.seed)
    ckpt_path = save_checkpoint(out_dir / "ckpt_final.ckpt", snap)
    return TrainResult(out_dir=out_dir, checkpoint_path=ckpt_path, log_path=log_path,
                       steps_run=steps_done, final_loss=final_loss,
                       stopped_early=stopped_early, final_psnr=final_psnr)
