import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from thermosr.degrade import (
    DegradationSpec,
    bicubic_resize,
    crop_aligned_patches,
    cubic_kernel,
    degrade,
    gaussian_blur,
)
from thermosr.errors import InvalidInputError
from thermosr.losses import RegionMasks


def _cubic(t, a=-0.5):
    """Cubic convolution kernel written out longhand."""
    t = abs(float(t))
    if t <= 1.0:
        return (a + 2.0) * t**3 - (a + 3.0) * t**2 + 1.0
    if t < 2.0:
        return a * t**3 - 5.0 * a * t**2 + 8.0 * a * t - 4.0 * a
    return 0.0


def _naive_taps(n_in, n_out, idx, antialias):
    scale = n_in / n_out
    stretch = max(scale, 1.0) if antialias else 1.0
    radius = 2.0 * stretch
    x = (idx + 0.5) * scale - 0.5
    j0 = math.ceil(x - radius)
    js = list(range(j0, j0 + int(math.floor(2.0 * radius)) + 2))
    ws = [_cubic((j - x) / stretch) for j in js]
    return ws, [min(max(j, 0), n_in - 1) for j in js]


def naive_bicubic(img, out_h, out_w, antialias=True):
    """Direct per-output-pixel 2D evaluation, no separable shortcut."""
    img = np.asarray(img, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    h, w, c = img.shape
    out = np.zeros((out_h, out_w, c))
    for p in range(out_h):
        wy, iy = _naive_taps(h, out_h, p, antialias)
        for q in range(out_w):
            wx, ix = _naive_taps(w, out_w, q, antialias)
            acc = np.zeros(c)
            for a, i in zip(wy, iy):
                for b, j in zip(wx, ix):
                    acc += a * b * img[i, j]
            out[p, q] = acc / (math.fsum(wy) * math.fsum(wx))
    return out[..., 0] if squeeze else out


# -- resampler ------------------------------------------------------------------

def test_cubic_kernel_interpolation_property():
    # unit value at integer 0, zero at other integers, even symmetry
    assert cubic_kernel(np.array([0.0]))[0] == 1.0
    assert np.all(cubic_kernel(np.array([1.0, 2.0, -1.0, 3.5])) == 0.0)
    t = np.linspace(0, 2, 41)
    assert np.array_equal(cubic_kernel(t), cubic_kernel(-t))


@pytest.mark.parametrize("shape,out", [((16, 16), (4, 4)), ((12, 9), (27, 16)),
                                       ((8, 8), (32, 32)), ((10, 14), (7, 21))])
def test_resize_matches_naive_oracle(shape, out, rng):
    img = rng.random(shape + (2,))
    got = bicubic_resize(img, *out)
    ref = naive_bicubic(img, *out)
    assert np.abs(got - ref).max() < 1e-12


def test_resize_preserves_constants(rng):
    img = np.full((20, 12), 0.37)
    for out in [(5, 3), (80, 48), (7, 25)]:
        got = bicubic_resize(img, *out)
        assert np.abs(got - 0.37).max() < 1e-14


def test_upscale_preserves_interior_ramp():
    w = 32
    ramp = np.tile(np.arange(w, dtype=np.float64) / w, (8, 1))
    up = bicubic_resize(ramp, 8, 4 * w)
    x = (np.arange(4 * w) + 0.5) * 0.25 - 0.5
    expect = np.tile(x / w, (8, 1))
    core = slice(8, -8)  # replicate clamping bends the ramp near the border
    assert np.abs(up[:, core] - expect[:, core]).max() < 1e-12


def test_downscale_preserves_interior_ramp():
    w = 64
    ramp = np.tile(np.arange(w, dtype=np.float64) / w, (16, 1))
    down = bicubic_resize(ramp, 4, w // 4)
    x = (np.arange(w // 4) + 0.5) * 4.0 - 0.5
    expect = np.tile(x / w, (4, 1))
    core = slice(3, -3)
    assert np.abs(down[:, core] - expect[:, core]).max() < 1e-12


def test_antialias_matters_only_when_shrinking(rng):
    img = rng.random((16, 16))
    up_on = bicubic_resize(img, 32, 32, antialias=True)
    up_off = bicubic_resize(img, 32, 32, antialias=False)
    assert np.array_equal(up_on, up_off)
    down_on = bicubic_resize(img, 8, 8, antialias=True)
    down_off = bicubic_resize(img, 8, 8, antialias=False)
    assert np.abs(down_on - down_off).max() > 1e-6


def test_resize_rejects_degenerate_output():
    with pytest.raises(InvalidInputError):
        bicubic_resize(np.ones((8, 8)), 0, 4)


# -- blur -------------------------------------------------------------------------

def test_gaussian_blur_matches_scipy(rng):
    img = rng.random((24, 24))
    got = gaussian_blur(img, sigma=1.6, kernel_size=13)
    ref = ndimage.gaussian_filter(img, 1.6, truncate=6 / 1.6, mode="nearest")
    assert np.abs(got - ref).max() < 1e-12


def test_gaussian_blur_preserves_mean_of_constant():
    img = np.full((16, 16), 0.4)
    assert np.abs(gaussian_blur(img, 3.2, 21) - 0.4).max() < 1e-14


def test_gaussian_blur_validation():
    with pytest.raises(InvalidInputError):
        gaussian_blur(np.ones((8, 8)), 1.0, 4)
    with pytest.raises(InvalidInputError):
        gaussian_blur(np.ones((8, 8)), 1.0, 1)


# -- degradation pipeline ----------------------------------------------------------

def test_spec_defaults_and_validation():
    assert DegradationSpec("bd", 4).blur_sigma == 1.6
    assert DegradationSpec("bd", 4).kernel_size == 13
    assert DegradationSpec("bd", 8).blur_sigma == 3.2
    assert DegradationSpec("bd", 8).kernel_size == 21
    assert DegradationSpec("BI", 4).kind == "bi"
    with pytest.raises(InvalidInputError):
        DegradationSpec("nearest", 4)
    with pytest.raises(InvalidInputError):
        DegradationSpec("bi", 3)
    with pytest.raises(InvalidInputError):
        DegradationSpec("bd", 4, blur_sigma=1.6, kernel_size=7)  # below 6 sigma
    with pytest.raises(InvalidInputError):
        DegradationSpec("bd", 4, kernel_size=14)


def test_spec_provenance_is_complete():
    rec = DegradationSpec("bd", 8).provenance()
    assert rec["kind"] == "bd" and rec["scale"] == 8
    assert rec["cubic_a"] == -0.5 and rec["edge_mode"] == "replicate"


def test_bd_is_blur_then_downscale_bitwise(rng):
    img = rng.random((32, 32, 3))
    spec = DegradationSpec("bd", 4)
    via_pipeline = degrade(img, spec)
    by_hand = bicubic_resize(gaussian_blur(img, spec.blur_sigma, spec.kernel_size), 8, 8)
    assert np.array_equal(via_pipeline, by_hand)


def test_bi_is_plain_resize_bitwise(rng):
    img = rng.random((32, 32))
    assert np.array_equal(degrade(img, DegradationSpec("bi", 4)),
                          bicubic_resize(img, 8, 8))


def test_degrade_requires_divisible_size():
    with pytest.raises(InvalidInputError):
        degrade(np.ones((30, 32)), DegradationSpec("bi", 4))


# -- aligned crops -----------------------------------------------------------------

def _coordinate_pair(h=16, w=16, scale=4):
    yy, xx = np.meshgrid(np.arange(scale * h), np.arange(scale * w), indexing="ij")
    hr = np.stack([yy, xx, np.zeros_like(yy)], axis=-1).astype(np.float64)
    labels = np.ones((scale * h, scale * w), np.int32)
    labels[: scale * h // 2] = 2
    return SimpleNamespace(
        thermal_lr=hr[::scale, ::scale].copy(),
        thermal_hr=hr,
        optical=hr.copy(),
        masks=RegionMasks(labels, np.zeros_like(labels, bool)),
        scale=scale,
    )


@given(st.integers(0, 2**31 - 1), st.sampled_from([4, 8, 12]))
@settings(max_examples=30, deadline=None)
def test_crops_stay_registered(seed, patch):
    pair = _coordinate_pair()
    crop = crop_aligned_patches(pair, patch, seed)
    y0, x0 = crop["origin"]
    s = pair.scale
    assert crop["lr"].shape == (patch, patch, 3)
    assert crop["hr"].shape == (s * patch, s * patch, 3)
    # the coordinate encoding exposes any registration slip directly
    assert crop["hr"][0, 0, 0] == s * y0 and crop["hr"][0, 0, 1] == s * x0
    assert crop["optical"][0, 0, 0] == s * y0
    assert crop["lr"][0, 0, 0] == s * y0  # LR grid sample at the same origin
    assert np.array_equal(crop["masks"].labels,
                          pair.masks.labels[s * y0:s * (y0 + patch), s * x0:s * (x0 + patch)])


def test_crop_same_seed_same_crop():
    pair = _coordinate_pair()
    a = crop_aligned_patches(pair, 8, 123)
    b = crop_aligned_patches(pair, 8, 123)
    assert a["origin"] == b["origin"]
    assert np.array_equal(a["hr"], b["hr"])


def test_crop_rejects_oversized_patch():
    with pytest.raises(InvalidInputError):
        crop_aligned_patches(_coordinate_pair(), 99, 0)
