"""Heat-conduction guidance for the thermal branch.

The block measures where feature activity curves sharply (a discrete Laplacian
response), fuses the thermal and optical responses into a guidance map, turns
that map into a bounded per-pixel diffusivity response, and injects it back
into the thermal feature through a zero-initialized residual convolution.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import DownProjection, mark_residual_output


def laplacian_response(feat: torch.Tensor) -> torch.Tensor:
    """Per-channel 5-point Laplacian with replicate padding.

    Kernel [[0,1,0],[1,-4,1],[0,1,0]]; replicate padding makes the response of
    a constant field zero everywhere, border included.
    """
    p = F.pad(feat, (1, 1, 1, 1), mode="replicate")
    return (
        p[..., :-2, 1:-1] + p[..., 2:, 1:-1] + p[..., 1:-1, :-2] + p[..., 1:-1, 2:]
        - 4.0 * feat
    )


def normalized_response(lap: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """|lap| scaled by its per-sample, per-channel spatial maximum (plus eps)."""
    mag = lap.abs()
    peak = mag.amax(dim=(-2, -1), keepdim=True)
    return mag / (peak + eps)


def guided_edge_map(
    lap_t: torch.Tensor,
    lap_o: torch.Tensor | None,
    lambda_t: float = 0.5,
    lambda_o: float = 0.5,
    eps: float = 1e-8,
) -> torch.Tensor:
    """Weighted fusion of normalized Laplacian magnitudes, elementwise in [0, 1).

    With no optical response available the thermal response is used alone at
    weight 1 so the map keeps the same scale.
    """
    m_t = normalized_response(lap_t, eps)
    if lap_o is None:
        return m_t
    if lap_o.shape != lap_t.shape:
        raise ValueError(
            f"response shapes differ: {tuple(lap_t.shape)} vs {tuple(lap_o.shape)}"
        )
    return lambda_t * m_t + lambda_o * normalized_response(lap_o, eps)


class ThermalDiffusionBlock(nn.Module):
    """Physics-guided residual update of the thermal feature.

    The optical feature, when present, is first projected down to the thermal
    resolution with this block's own learnable projection. The predicted
    diffusivity response lies in (0, 1) elementwise. Conv weights of the output
    stage start at zero, so the block is initially the identity.
    """

    def __init__(self, dim: int, lambda_t: float = 0.5, lambda_o: float = 0.5,
                 use_optical: bool = True, eps: float = 1e-8):
        super().__init__()
        self.lambda_t = lambda_t
        self.lambda_o = lambda_o
        self.eps = eps
        self.optical_down = DownProjection(dim) if use_optical else None
        self.pre = nn.Sequential(
            nn.Conv2d(dim, dim, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(dim, dim, 3, padding=1),
        )
        self.conv_out = mark_residual_output(nn.Conv2d(dim * 2, dim, 3, padding=1))

    def diffusivity(self, f_t: torch.Tensor, f_o: torch.Tensor | None) -> torch.Tensor:
        lap_t = laplacian_response(f_t)
        lap_o = None
        if self.optical_down is not None and f_o is not None:
            lap_o = laplacian_response(self.optical_down(f_o))
        guided = guided_edge_map(lap_t, lap_o, self.lambda_t, self.lambda_o, self.eps)
        return torch.sigmoid(self.pre(guided))

    def forward(self, f_t: torch.Tensor, f_o: torch.Tensor | None = None) -> torch.Tensor:
        a = self.diffusivity(f_t, f_o)
        return self.conv_out(torch.cat([f_t, a], dim=1)) + f_t
