import math

import numpy as np
import pytest

from thermosr.errors import InvalidInputError
from thermosr.metrics import (
    PSNR_CAP_DB,
    difference_maps,
    metric_report,
    psnr_all,
    ssim,
)


def naive_ssim(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Windowed SSIM via explicit per-pixel patch loops."""
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    r = (window - 1) // 2
    x1 = np.arange(-r, r + 1, dtype=np.float64)
    k1d = np.exp(-0.5 * (x1 / sigma) ** 2)
    w = np.outer(k1d, k1d)
    w /= w.sum()
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    h, wid, chans = a.shape
    vals = []
    for c in range(chans):
        for i in range(r, h - r):
            for j in range(r, wid - r):
                pa = a[i - r:i + r + 1, j - r:j + r + 1, c]
                pb = b[i - r:i + r + 1, j - r:j + r + 1, c]
                mx = (w * pa).sum()
                my = (w * pb).sum()
                vx = (w * pa * pa).sum() - mx * mx
                vy = (w * pb * pb).sum() - my * my
                vxy = (w * pa * pb).sum() - mx * my
                vals.append(
                    ((2 * mx * my + c1) * (2 * vxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2))
                )
    return float(np.mean(vals))


# -- psnr ----------------------------------------------------------------------

def test_psnr_unit_mse_at_8bit_peak():
    a = np.zeros((10, 10))
    b = np.ones((10, 10))
    assert psnr_all(a, b, peak=255.0) == pytest.approx(20 * math.log10(255), abs=1e-12)


def test_psnr_maximal_error_is_zero_db():
    assert psnr_all(np.zeros((8, 8)), np.ones((8, 8)), peak=1.0) == 0.0


def test_psnr_identical_hits_cap():
    img = np.random.default_rng(0).random((8, 8, 3))
    assert psnr_all(img, img) == PSNR_CAP_DB


def test_psnr_cap_applies_to_tiny_error():
    a = np.zeros((8, 8))
    b = np.full((8, 8), 1e-7)  # 140 dB uncapped
    assert psnr_all(a, b) == PSNR_CAP_DB


def test_psnr_uses_joint_mse_over_channels(rng):
    a = rng.random((6, 6, 3))
    b = rng.random((6, 6, 3))
    mse = np.mean((a - b) ** 2)
    assert psnr_all(a, b) == pytest.approx(10 * math.log10(1.0 / mse), abs=1e-12)


def test_psnr_validation():
    with pytest.raises(InvalidInputError):
        psnr_all(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(InvalidInputError):
        psnr_all(np.zeros((4, 4)), np.zeros((4, 4)), peak=0.0)


# -- ssim ----------------------------------------------------------------------

def test_ssim_self_is_one(rng):
    img = rng.random((16, 16, 3))
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)


def test_ssim_matches_patch_loop_oracle(rng):
    a = rng.random((18, 15))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(naive_ssim(a, b), abs=1e-10)


def test_ssim_matches_patch_loop_oracle_color(rng):
    a = rng.random((16, 16, 3))
    b = rng.random((16, 16, 3))
    assert ssim(a, b) == pytest.approx(naive_ssim(a, b), abs=1e-10)


def test_ssim_matches_skimage_when_available(rng):
    skm = pytest.importorskip("skimage.metrics")
    a = rng.random((24, 24))
    b = np.clip(a + 0.05 * rng.standard_normal(a.shape), 0, 1)
    ref = skm.structural_similarity(
        a, b, win_size=11, gaussian_weights=True, sigma=1.5,
        use_sample_covariance=False, data_range=1.0,
    )
    assert ssim(a, b) == pytest.approx(ref, abs=1e-7)


def test_ssim_is_symmetric_and_below_one(rng):
    a = rng.random((16, 16))
    b = rng.random((16, 16))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    assert ssim(a, b) < 1.0


def test_ssim_rejects_small_images():
    with pytest.raises(InvalidInputError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)), window=11)


# -- difference maps ------------------------------------------------------------

def test_difference_maps_hand_example():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    b = np.zeros((2, 2))
    d = difference_maps(a, b)
    assert np.array_equal(d["temp_map"], a)
    assert np.array_equal(d["grad_map"], np.array([[1.0, 1.0], [0.0, 0.0]]))
    assert d["temp_mae"] == 0.25
    assert d["grad_mae"] == 0.5


def test_difference_maps_color_uses_luminance():
    a = np.zeros((4, 4, 3))
    a[..., 0] = 0.9  # mean over channels is 0.3
    d = difference_maps(a, np.zeros((4, 4, 3)))
    assert d["temp_mae"] == pytest.approx(0.3)


def test_metric_report_wiring(rng):
    a = rng.random((16, 16, 3))
    b = rng.random((16, 16, 3))
    rep = metric_report(a, b, with_maps=True)
    assert rep.psnr == psnr_all(a, b)
    assert rep.ssim == ssim(a, b)
    assert set(rep.maps) == {"temp_map", "grad_map"}
    assert rep.maps["temp_map"].shape == (16, 16)
    plain = metric_report(a, b)
    assert plain.maps == {}
