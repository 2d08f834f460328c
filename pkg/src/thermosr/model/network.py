"""Dual-branch super-resolution network.

The thermal branch runs at the low-resolution grid (H, W); the optical branch
runs at (2H, 2W) regardless of the upsampling factor. Each stage enhances both
branches jointly and ends in a zero-initialized convolution plus a residual
from the stage input, so a freshly built stage is the identity map.

`branch_mode` selects the collaboration wiring:
  full       both branches, bidirectional cross-attention, SR output
  only_sr    thermal branch alone, SR output
  only_mc    optical branch alone, conversion output
  guided_sr  both branches, attention only thermal <- optical, SR output
  guided_mc  both branches, attention only optical <- thermal, conversion output
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn

from ..config import ModelConfig
from ..degrade import cubic_kernel
from ..errors import InvalidInputError
from .blocks import (
    DownProjection,
    MixedAttentionBlock,
    UpProjection,
    WindowCrossAttention,
    mark_residual_output,
    pixel_shuffle,
)
from .diffusion import ThermalDiffusionBlock


class ThermalEncoder(nn.Module):
    """Single 3x3 convolution lifting an RGB image to C channels."""

    def __init__(self, dim: int, kernel: int = 3):
        super().__init__()
        self.conv = nn.Conv2d(3, dim, kernel, padding=kernel // 2,
                              padding_mode="replicate")

    def forward(self, x):
        if x.shape[1] != 3:
            raise InvalidInputError(f"expected 3 input channels, got {x.shape[1]}")
        return self.conv(x)


class OpticalEncoder(nn.Module):
    """Consecutive convolutions bringing an (sH, sW) image to (2H, 2W, C).

    One stride-2 convolution per factor of two beyond the fixed 2x feature
    resolution, so the middle stage has log2(s) - 1 strided layers.
    """

    def __init__(self, dim: int, scale: int, kernel: int = 3):
        super().__init__()
        self.n_down = int(math.log2(scale)) - 1
        pad = kernel // 2
        self.conv_in = nn.Conv2d(3, dim, kernel, padding=pad, padding_mode="replicate")
        self.down = nn.ModuleList(
            nn.Conv2d(dim, dim, kernel, stride=2, padding=pad) for _ in range(self.n_down)
        )
        self.conv_out = nn.Conv2d(dim, dim, kernel, padding=pad, padding_mode="replicate")

    def forward(self, x):
        if x.shape[1] != 3:
            raise InvalidInputError(f"expected 3 input channels, got {x.shape[1]}")
        H, W = x.shape[-2:]
        div = 1 << self.n_down
        if H % div or W % div:
            raise InvalidInputError(
                f"optical size ({H}, {W}) must be divisible by {div} for this scale"
            )
        x = self.conv_in(x)
        for conv in self.down:
            x = conv(x)
        return self.conv_out(x)


class CrossBranchBlock(nn.Module):
    """Per-branch attention refinement plus optional mutual cross-attention.

    The thermal branch queries the down-projected optical feature; the optical
    branch queries the up-projected thermal feature. `directions` restricts
    which of the two attention paths exist.
    """

    def __init__(self, cfg: ModelConfig, thermal: bool, optical: bool,
                 directions: tuple[str, ...]):
        super().__init__()
        dim, heads, window = cfg.channels, cfg.heads, cfg.window
        self.refine_t = MixedAttentionBlock(dim, heads, window) if thermal else None
        self.refine_o = MixedAttentionBlock(dim, heads, window) if optical else None
        self.down = self.attn_t = None
        self.up = self.attn_o = None
        if cfg.use_crme and thermal and optical:
            if "t_from_o" in directions:
                self.down = DownProjection(dim)
                self.attn_t = WindowCrossAttention(dim, heads, window)
            if "o_from_t" in directions:
                self.up = UpProjection(dim)
                self.attn_o = WindowCrossAttention(dim, heads, window)

    def forward(self, f_t, f_o):
        h_t = self.refine_t(f_t) if self.refine_t is not None else None
        h_o = self.refine_o(f_o) if self.refine_o is not None else None
        out_t, out_o = h_t, h_o
        if self.attn_t is not None:
            out_t = self.attn_t(h_t, self.down(h_o))
        if self.attn_o is not None:
            out_o = self.attn_o(h_o, self.up(h_t))
        return out_t, out_o


class EnhancementStage(nn.Module):
    """One processing stage: cross-branch enhancement, physics guidance on the
    thermal branch, a stack of attention layers per branch, and a
    zero-initialized output convolution feeding the stage-input residual."""

    def __init__(self, cfg: ModelConfig, thermal: bool, optical: bool,
                 directions: tuple[str, ...]):
        super().__init__()
        dim = cfg.channels
        self.cross = CrossBranchBlock(cfg, thermal, optical, directions)
        self.physics = None
        if cfg.use_pdtm and thermal:
            self.physics = ThermalDiffusionBlock(
                dim, cfg.lambda_t, cfg.lambda_o, use_optical=optical
            )
        def stack():
            return nn.Sequential(
                *[MixedAttentionBlock(dim, cfg.heads, cfg.window) for _ in range(cfg.htl_depth)]
            )
        self.layers_t = stack() if thermal else None
        self.layers_o = stack() if optical else None
        self.out_t = mark_residual_output(nn.Conv2d(dim, dim, 3, padding=1)) if thermal else None
        self.out_o = mark_residual_output(nn.Conv2d(dim, dim, 3, padding=1)) if optical else None

    def forward(self, f_t, f_o):
        h_t, h_o = self.cross(f_t, f_o)
        if self.physics is not None:
            h_t = self.physics(h_t, h_o)
        if self.layers_t is not None:
            h_t = self.out_t(self.layers_t(h_t)) + f_t
        if self.layers_o is not None:
            h_o = self.out_o(self.layers_o(h_o)) + f_o
        return h_t, h_o


class FusionHead(nn.Module):
    """Merge branches at the LR grid, expand to s^2 * 3 sub-pixel channels,
    shuffle up by s, and refine with a final convolution."""

    def __init__(self, dim: int, scale: int, optical: bool):
        super().__init__()
        self.scale = scale
        self.down = DownProjection(dim) if optical else None
        self.fuse = (
            nn.Conv2d(dim * 2, dim, 3, padding=1, padding_mode="replicate")
            if optical else None
        )
        self.to_pixels = nn.Conv2d(dim, 3 * scale * scale, 3, padding=1,
                                   padding_mode="replicate")
        self.refine = nn.Conv2d(3, 3, 3, padding=1, padding_mode="replicate")

    def forward(self, f_t, f_o):
        if self.fuse is not None:
            f_t = self.fuse(torch.cat([f_t, self.down(f_o)], dim=1))
        return self.refine(pixel_shuffle(self.to_pixels(f_t), self.scale))


class ConversionHead(nn.Module):
    """Map the (2H, 2W) optical feature to an (sH, sW) thermal image."""

    def __init__(self, dim: int, scale: int):
        super().__init__()
        self.ups = nn.Sequential(*[UpProjection(dim) for _ in range(int(math.log2(scale)) - 1)])
        self.to_img = nn.Conv2d(dim, 3, 3, padding=1)

    def forward(self, f_o):
        return self.to_img(self.ups(f_o))


class ThermalSRNet(nn.Module):
    """Full pipeline: encoders, N enhancement stages, reconstruction head(s).

    forward() returns {"sr": prediction, "mc": conversion or None}. "sr" is
    always the model's HR thermal estimate; in conversion-only modes it aliases
    the conversion output.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        thermal = cfg.has_thermal_branch
        optical = cfg.has_optical_branch
        directions = {
            "full": ("t_from_o", "o_from_t"),
            "only_sr": (),
            "only_mc": (),
            "guided_sr": ("t_from_o",),
            "guided_mc": ("o_from_t",),
        }[cfg.branch_mode]
        self.encoder_t = ThermalEncoder(cfg.channels, cfg.kernel) if thermal else None
        self.encoder_o = OpticalEncoder(cfg.channels, cfg.scale, cfg.kernel) if optical else None
        self.stages = nn.ModuleList(
            EnhancementStage(cfg, thermal, optical, directions) for _ in range(cfg.stages)
        )
        self.head_sr = None
        self.head_mc = None
        if cfg.branch_mode in ("full", "only_sr", "guided_sr"):
            self.head_sr = FusionHead(cfg.channels, cfg.scale, optical)
        if cfg.has_mc_head:
            self.head_mc = ConversionHead(cfg.channels, cfg.scale)

    def _check_inputs(self, lr, optical):
        cfg = self.cfg
        if cfg.has_thermal_branch:
            if lr is None:
                raise InvalidInputError("this branch mode requires a thermal LR input")
            if lr.dim() != 4 or lr.shape[1] != 3:
                raise InvalidInputError("thermal input must be (B, 3, H, W)")
        if cfg.has_optical_branch:
            if optical is None:
                raise InvalidInputError("this branch mode requires an optical input")
            if optical.dim() != 4 or optical.shape[1] != 3:
                raise InvalidInputError("optical input must be (B, 3, sH, sW)")
            if lr is not None and cfg.has_thermal_branch:
                H, W = lr.shape[-2:]
                if optical.shape[-2:] != (cfg.scale * H, cfg.scale * W):
                    raise InvalidInputError(
                        f"optical size {tuple(optical.shape[-2:])} must be exactly "
                        f"{cfg.scale}x the thermal size ({H}, {W})"
                    )

    def forward(self, lr, optical=None):
        self._check_inputs(lr, optical)
        f_t = self.encoder_t(lr) if self.encoder_t is not None else None
        f_o = self.encoder_o(optical) if self.encoder_o is not None else None
        for stage in self.stages:
            f_t, f_o = stage(f_t, f_o)
        if self.head_sr is not None:
            sr = self.head_sr(f_t, f_o)
            mc = None
        else:
            mc = self.head_mc(f_o)
            sr = mc
        if not self.training:
            sr = sr.clamp(0.0, 1.0)
            mc = mc.clamp(0.0, 1.0) if mc is not None else None
        return {"sr": sr, "mc": mc}


def init_weights(model: nn.Module) -> nn.Module:
    """Truncated-normal (std 0.02) weights, zero biases; layers tagged as
    residual outputs are zeroed entirely so composite blocks start as
    identities."""
    for m in model.modules():
        if isinstance(m, (nn.Linear, nn.Conv2d)):
            nn.init.trunc_normal_(m.weight, std=0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.LayerNorm):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
    for m in model.modules():
        if getattr(m, "_residual_output", False):
            nn.init.zeros_(m.weight)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
    return model


def _identity_taps(conv: nn.Conv2d, pairs, zero_rest: bool = False) -> None:
    """Place a centered unit tap from input channel i to output channel o for
    each (o, i) pair, optionally clearing everything else first."""
    cy = conv.kernel_size[0] // 2
    cx = conv.kernel_size[1] // 2
    with torch.no_grad():
        if zero_rest:
            conv.weight.zero_()
        for o, i in pairs:
            conv.weight[o].zero_()
            conv.weight[o, i, cy, cx] = 1.0


# one-pixel shifts stored by the encoder's first 27 channels, in row-major
# order; channel 9c + j holds input plane c shifted by _SHIFT_BANK[j]
_SHIFT_BANK = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]


def _phase_weights(r: int) -> torch.Tensor:
    """Catmull-Rom interpolation weights for the r sub-pixel phases of an
    r-fold upsampler, laid out over integer source offsets -2..2 and
    normalized to sum to one per phase."""
    w = torch.zeros(r, 5, dtype=torch.float64)
    for p in range(r):
        x = (p + 0.5) / r - 0.5
        base = math.floor(x)
        taps = np.arange(base - 1, base + 3)
        k = cubic_kernel(x - taps)
        w[p, taps + 2] = torch.from_numpy(k / k.sum())
    return w


def init_pass_through(model: ThermalSRNet) -> ThermalSRNet:
    """Structure the SR path so a freshly built network reproduces bicubic
    upsampling of its thermal input exactly, borders included.

    The thermal encoder stores the nine one-pixel shifts of each input plane
    in its first 27 channels, the stages are already identities (zero residual
    outputs), and the sub-pixel convolution splits each interpolation tap into
    a channel shift plus a same-sign kernel offset; replicate padding then
    reproduces the resampler's index clamping at the borders. Widths too small
    for the shift bank fall back to nearest-neighbor routing. Training starts
    from a strong upsampler and only has to learn the residual detail.
    """
    head = model.head_sr
    if head is None or model.encoder_t is None:
        return model
    enc = model.encoder_t.conv
    dim = enc.out_channels
    r = head.scale
    has_bank = (dim >= 27 and enc.kernel_size[0] >= 3 and enc.kernel_size[1] >= 3
                and head.to_pixels.padding_mode == "replicate"
                and enc.padding_mode == "replicate")
    if not has_bank:
        _identity_taps(enc, [(c, c) for c in range(3)])
        if head.fuse is not None:
            _identity_taps(head.fuse, [(c, c) for c in range(3)], zero_rest=True)
        r2 = r * r
        _identity_taps(head.to_pixels,
                       [(c * r2 + k, c) for c in range(3) for k in range(r2)],
                       zero_rest=True)
        _identity_taps(head.refine, [(c, c) for c in range(3)], zero_rest=True)
        return model
    with torch.no_grad():
        ky0 = enc.kernel_size[0] // 2
        kx0 = enc.kernel_size[1] // 2
        for c in range(3):
            for j, (dy, dx) in enumerate(_SHIFT_BANK):
                enc.weight[9 * c + j].zero_()
                enc.weight[9 * c + j, c, ky0 + dy, kx0 + dx] = 1.0
        if head.fuse is not None:
            # thermal half passes the bank straight through; the optical half
            # starts near zero but nonzero so its encoder sees gradient from
            # the first step
            head.fuse.weight.zero_()
            cy = head.fuse.kernel_size[0] // 2
            for c in range(dim):
                head.fuse.weight[c, c, cy, cy] = 1.0
            nn.init.trunc_normal_(head.fuse.weight[:, dim:], std=1e-3)
        w = head.to_pixels.weight
        w.zero_()
        phase = _phase_weights(r).to(w.dtype)
        for c in range(3):
            for py in range(r):
                for px in range(r):
                    out = c * r * r + r * py + px
                    for dy in range(-2, 3):
                        for dx in range(-2, 3):
                            wv = phase[py, dy + 2] * phase[px, dx + 2]
                            if wv == 0.0:
                                continue
                            sy = max(-1, min(1, dy))
                            sx = max(-1, min(1, dx))
                            j = 3 * (dy - sy + 1) + (dx - sx + 1)
                            w[out, 9 * c + j, 1 + sy, 1 + sx] = wv
        _identity_taps(head.refine, [(c, c) for c in range(3)], zero_rest=True)
    return model


def build_model(cfg: ModelConfig, seed: int = 0, dtype: torch.dtype = torch.float32) -> ThermalSRNet:
    """Deterministically construct and initialize a network variant.

    Initialization draws happen in float32 under a fixed torch seed, then the
    model is cast, so the same (cfg, seed) yields bit-identical parameters in
    either precision mode.
    """
    torch.manual_seed(seed)
    model = ThermalSRNet(cfg)
    init_weights(model)
    init_pass_through(model)
    return model.to(dtype)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
