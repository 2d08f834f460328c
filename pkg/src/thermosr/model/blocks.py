"""Attention blocks and scale projections shared by both network branches.

All modules take NCHW tensors. Window partitioning pads with reflection so
arbitrary spatial sizes are accepted; outputs are cropped back to the input
size. Residual output projections start at zero so a freshly built block is
the identity map, which keeps deep stacks trainable and makes the residual
structure directly testable.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from ..errors import InvalidInputError


def mark_residual_output(module: nn.Module) -> nn.Module:
    """Tag a layer whose weights must be zero at init (it feeds a residual add)."""
    module._residual_output = True
    return module


def reflect_pad_to_multiple(x: torch.Tensor, multiple: int):
    """Pad H and W on the bottom/right to the next multiple via reflection.

    Reflection is applied in several passes when the pad exceeds the input
    size, so small inputs still work. Returns the padded tensor and the
    original (H, W).
    """
    H, W = x.shape[-2:]
    ph = (-H) % multiple
    pw = (-W) % multiple
    size = (H, W)
    while ph > 0 or pw > 0:
        h, w = x.shape[-2:]
        dh = min(ph, h - 1)
        dw = min(pw, w - 1)
        if (ph > 0 and dh == 0) or (pw > 0 and dw == 0):
            raise InvalidInputError("cannot reflect-pad a spatial dimension of size 1")
        x = F.pad(x, (0, dw, 0, dh), mode="reflect")
        ph -= dh
        pw -= dw
    return x, size


def window_partition(x: torch.Tensor, window: int) -> torch.Tensor:
    """(B, C, H, W) -> (B*nH*nW, window*window, C) token windows, row-major."""
    B, C, H, W = x.shape
    if H % window or W % window:
        raise InvalidInputError(f"spatial size ({H}, {W}) not a multiple of window {window}")
    return rearrange(
        x, "b c (nh wh) (nw ww) -> (b nh nw) (wh ww) c", wh=window, ww=window
    )


def window_merge(tokens: torch.Tensor, window: int, H: int, W: int) -> torch.Tensor:
    """Inverse of :func:`window_partition`."""
    return rearrange(
        tokens,
        "(b nh nw) (wh ww) c -> b c (nh wh) (nw ww)",
        nh=H // window,
        nw=W // window,
        wh=window,
        ww=window,
    )


def scaled_dot_attention(q, k, v, return_weights: bool = False):
    """softmax(q k^T / sqrt(d)) v over the last two dims of (..., L, d) tensors."""
    d = q.shape[-1]
    attn = (q @ k.transpose(-2, -1)) * (d ** -0.5)
    attn = attn.softmax(dim=-1)
    out = attn @ v
    if return_weights:
        return out, attn
    return out


def pixel_shuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """Rearrange (B, C*r*r, H, W) -> (B, C, rH, rW); sub-channel k of a group
    lands at pixel offset (k // r, k % r)."""
    if x.shape[1] % (r * r):
        raise InvalidInputError(f"channels {x.shape[1]} not divisible by {r}^2")
    return F.pixel_shuffle(x, r)


class LayerNorm2d(nn.Module):
    """Channel LayerNorm for NCHW tensors."""

    def __init__(self, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim)

    def forward(self, x):
        return rearrange(self.norm(rearrange(x, "b c h w -> b h w c")), "b h w c -> b c h w")


class WindowSelfAttention(nn.Module):
    """Pre-norm multi-head self-attention inside non-overlapping windows."""

    def __init__(self, dim: int, heads: int, window: int):
        super().__init__()
        self.heads = heads
        self.window = window
        self.norm = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = mark_residual_output(nn.Linear(dim, dim))

    def forward(self, x, return_weights: bool = False):
        x_pad, (H, W) = reflect_pad_to_multiple(x, self.window)
        Hp, Wp = x_pad.shape[-2:]
        tokens = window_partition(x_pad, self.window)
        q, k, v = rearrange(
            self.qkv(self.norm(tokens)), "b l (three h d) -> three b h l d", three=3, h=self.heads
        )
        out, weights = scaled_dot_attention(q, k, v, return_weights=True)
        out = self.proj(rearrange(out, "b h l d -> b l (h d)"))
        y = window_merge(tokens + out, self.window, Hp, Wp)[..., :H, :W]
        if return_weights:
            return y, weights
        return y


class ChannelAttention(nn.Module):
    """Per-head attention across channels; keys/queries are L2-normalized over space."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm = LayerNorm2d(dim)
        self.qkv = nn.Conv2d(dim, dim * 3, 1)
        self.temperature = nn.Parameter(torch.ones(heads, 1, 1))
        self.proj = mark_residual_output(nn.Conv2d(dim, dim, 1))

    def forward(self, x):
        _, _, H, W = x.shape
        q, k, v = rearrange(
            self.qkv(self.norm(x)), "b (three hd d) h w -> three b hd d (h w)",
            three=3, hd=self.heads,
        )
        q = F.normalize(q, dim=-1)
        k = F.normalize(k, dim=-1)
        attn = ((q @ k.transpose(-2, -1)) * self.temperature).softmax(dim=-1)
        out = rearrange(attn @ v, "b hd d (h w) -> b (hd d) h w", h=H, w=W)
        return x + self.proj(out)


class FeedForward(nn.Module):
    """Pre-norm pointwise MLP with expansion factor 2."""

    def __init__(self, dim: int, expansion: int = 2):
        super().__init__()
        self.norm = LayerNorm2d(dim)
        self.fc1 = nn.Conv2d(dim, dim * expansion, 1)
        self.act = nn.GELU()
        self.fc2 = mark_residual_output(nn.Conv2d(dim * expansion, dim, 1))

    def forward(self, x):
        return x + self.fc2(self.act(self.fc1(self.norm(x))))


class MixedAttentionBlock(nn.Module):
    """Transformer layer mixing windowed spatial attention, channel attention
    and a pointwise MLP, each wrapped in its own residual connection."""

    def __init__(self, dim: int, heads: int, window: int):
        super().__init__()
        self.spatial = WindowSelfAttention(dim, heads, window)
        self.channel = ChannelAttention(dim, heads)
        self.ffn = FeedForward(dim)

    def forward(self, x):
        return self.ffn(self.channel(self.spatial(x)))


class WindowCrossAttention(nn.Module):
    """Windowed multi-head cross-attention: queries from one branch, keys and
    values from a context feature of the same spatial size. Head outputs are
    concatenated and added to the query directly; the value projection starts
    at zero so the block is initially the identity on the query branch."""

    def __init__(self, dim: int, heads: int, window: int):
        super().__init__()
        self.heads = heads
        self.window = window
        self.norm_q = nn.LayerNorm(dim)
        self.norm_kv = nn.LayerNorm(dim)
        self.to_q = nn.Linear(dim, dim)
        self.to_k = nn.Linear(dim, dim)
        self.to_v = mark_residual_output(nn.Linear(dim, dim, bias=False))

    def forward(self, query, context, return_weights: bool = False):
        if query.shape != context.shape:
            raise InvalidInputError(
                f"query {tuple(query.shape)} and context {tuple(context.shape)} must match"
            )
        q_pad, (H, W) = reflect_pad_to_multiple(query, self.window)
        c_pad, _ = reflect_pad_to_multiple(context, self.window)
        Hp, Wp = q_pad.shape[-2:]
        q_tokens = window_partition(q_pad, self.window)
        c_pad_tokens = window_partition(c_pad, self.window)
        c_norm = self.norm_kv(c_pad_tokens)
        q = rearrange(
            self.to_q(self.norm_q(q_tokens)), "b l (h d) -> b h l d", h=self.heads
        )
        k = rearrange(self.to_k(c_norm), "b l (h d) -> b h l d", h=self.heads)
        v = rearrange(self.to_v(c_norm), "b l (h d) -> b h l d", h=self.heads)
        out, weights = scaled_dot_attention(q, k, v, return_weights=True)
        out = rearrange(out, "b h l d -> b l (h d)")
        y = window_merge(q_tokens + out, self.window, Hp, Wp)[..., :H, :W]
        if return_weights:
            return y, weights
        return y


class DownProjection(nn.Module):
    """Halve spatial resolution with a strided 3x3 conv, channels preserved."""

    def __init__(self, dim: int):
        super().__init__()
        self.conv = nn.Conv2d(dim, dim, 3, stride=2, padding=1)

    def forward(self, x):
        H, W = x.shape[-2:]
        if H % 2 or W % 2:
            raise InvalidInputError(f"spatial size ({H}, {W}) must be even to downscale by 2")
        return self.conv(x)


class UpProjection(nn.Module):
    """Double spatial resolution: 1x1 conv to 4x channels then pixel shuffle."""

    def __init__(self, dim: int):
        super().__init__()
        self.conv = nn.Conv2d(dim, dim * 4, 1)
        self.shuffle = nn.PixelShuffle(2)

    def forward(self, x):
        return self.shuffle(self.conv(x))
