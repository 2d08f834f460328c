import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from thermosr.model.diffusion import (
    ThermalDiffusionBlock,
    guided_edge_map,
    laplacian_response,
    normalized_response,
)
from thermosr.model.network import init_weights


def naive_laplacian(field):
    """Clamped-index 5-point stencil, looped per pixel."""
    h, w = field.shape
    out = np.zeros_like(field)
    for y in range(h):
        for x in range(w):
            up = field[max(y - 1, 0), x]
            down = field[min(y + 1, h - 1), x]
            left = field[y, max(x - 1, 0)]
            right = field[y, min(x + 1, w - 1)]
            out[y, x] = up + down + left + right - 4.0 * field[y, x]
    return out


def test_laplacian_matches_naive_stencil(rng):
    field = rng.random((11, 7))
    got = laplacian_response(torch.from_numpy(field)[None, None])[0, 0].numpy()
    assert np.allclose(got, naive_laplacian(field), atol=1e-12)


def test_laplacian_quadratic_value():
    # x^2 along one axis has a second difference of exactly 2 in the interior
    x = torch.arange(9, dtype=torch.float64)
    field = (x**2).expand(9, 9).clone()
    lap = laplacian_response(field[None, None])[0, 0]
    assert torch.all(lap[:, 1:-1] == 2.0)


def test_laplacian_impulse():
    field = torch.zeros(5, 5, dtype=torch.float64)
    field[2, 2] = 1.0
    lap = laplacian_response(field[None, None])[0, 0]
    expect = torch.zeros(5, 5, dtype=torch.float64)
    expect[2, 2] = -4.0
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        expect[2 + dy, 2 + dx] = 1.0
    assert torch.equal(lap, expect)


def test_laplacian_constant_field_is_zero_everywhere():
    lap = laplacian_response(torch.full((2, 3, 6, 6), 0.7))
    assert torch.all(lap == 0.0)


@given(scale=st.floats(min_value=0.1, max_value=100.0),
       seed=st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_normalized_response_is_scale_invariant_and_bounded(scale, seed):
    g = torch.Generator().manual_seed(seed)
    lap = torch.randn(1, 2, 8, 8, generator=g, dtype=torch.float64)
    base = normalized_response(lap)
    scaled = normalized_response(lap * scale)
    assert base.min() >= 0.0 and base.max() <= 1.0
    assert torch.allclose(base, scaled, atol=1e-6)


def test_guided_map_weights_and_fallback():
    lap_t = torch.tensor([[[[0.0, 2.0], [-2.0, 1.0]]]])
    lap_o = torch.tensor([[[[4.0, 0.0], [0.0, -4.0]]]])
    fused = guided_edge_map(lap_t, lap_o, lambda_t=0.25, lambda_o=0.75)
    expect = 0.25 * normalized_response(lap_t) + 0.75 * normalized_response(lap_o)
    assert torch.allclose(fused, expect)
    alone = guided_edge_map(lap_t, None, lambda_t=0.25, lambda_o=0.75)
    assert torch.equal(alone, normalized_response(lap_t))


def test_guided_map_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        guided_edge_map(torch.zeros(1, 1, 4, 4), torch.zeros(1, 1, 8, 8))


def test_block_starts_as_identity():
    torch.manual_seed(0)
    block = ThermalDiffusionBlock(8)
    init_weights(block)
    f_t = torch.randn(2, 8, 8, 8)
    f_o = torch.randn(2, 8, 16, 16)
    assert torch.equal(block(f_t, f_o), f_t)
    assert torch.equal(block(f_t, None), f_t)


def test_diffusivity_is_strictly_inside_unit_interval():
    torch.manual_seed(1)
    block = ThermalDiffusionBlock(4)
    a = block.diffusivity(torch.randn(1, 4, 6, 6), torch.randn(1, 4, 12, 12))
    assert a.shape == (1, 4, 6, 6)
    assert torch.all(a > 0.0) and torch.all(a < 1.0)


def test_optical_projection_is_owned_and_optional():
    with_opt = ThermalDiffusionBlock(4, use_optical=True)
    without = ThermalDiffusionBlock(4, use_optical=False)
    assert with_opt.optical_down is not None
    assert without.optical_down is None
    n_with = sum(p.numel() for p in with_opt.parameters())
    n_without = sum(p.numel() for p in without.parameters())
    assert n_with > n_without
    out = without(torch.randn(1, 4, 6, 6), torch.randn(1, 4, 12, 12))
    assert out.shape == (1, 4, 6, 6)
