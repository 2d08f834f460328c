"""Full-reference image quality metrics: all-channel PSNR, Gaussian-window
SSIM, and temperature/gradient difference maps. Pure numpy, float64."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError

PSNR_CAP_DB = 99.0


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr_all(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) with the MSE over all pixels and channels jointly.
    Zero MSE returns the 99 dB sentinel; the value is capped there."""
    if peak <= 0:
        raise InvalidInputError(f"peak must be > 0, got {peak}")
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(peak * peak / mse), PSNR_CAP_DB)


def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    r = (window - 1) // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _filter_valid(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    r = (k.size - 1) // 2
    y = ndimage.correlate1d(x, k, axis=0, mode="nearest")
    y = ndimage.correlate1d(y, k, axis=1, mode="nearest")
    return y[r:-r, r:-r]


def ssim(a: np.ndarray, b: np.ndarray, window: int = 11, k1: float = 0.01,
         k2: float = 0.03, sigma: float = 1.5, data_range: float = 1.0) -> float:
    """Mean SSIM with a Gaussian window, averaged over channels then pixels.
    Statistics are weighted moments (no sample-covariance correction); the map
    is evaluated on the valid interior only."""
    a, b = _check_pair(a, b)
    if min(a.shape[0], a.shape[1]) < window:
        raise InvalidInputError(
            f"image {a.shape[:2]} smaller than the {window}x{window} window"
        )
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    k = _gaussian_kernel(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    maps = []
    for c in range(a.shape[2]):
        x, y = a[..., c], b[..., c]
        mx = _filter_valid(x, k)
        my = _filter_valid(y, k)
        vx = _filter_valid(x * x, k) - mx * mx
        vy = _filter_valid(y * y, k) - my * my
        vxy = _filter_valid(x * y, k) - mx * my
        s = ((2 * mx * my + c1) * (2 * vxy + c2)) / (
            (mx * mx + my * my + c1) * (vx + vy + c2)
        )
        maps.append(s)
    return float(np.mean(maps))


def _luminance(img: np.ndarray) -> np.ndarray:
    return img.mean(axis=-1) if img.ndim == 3 else img


def forward_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences along x and y, zero at the last column/row."""
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:, :] - img[:-1, :]
    return gx, gy


def difference_maps(a: np.ndarray, b: np.ndarray) -> dict:
    """Per-pixel |luminance difference| and gradient-difference magnitude maps
    plus their means."""
    a, b = _check_pair(a, b)
    la, lb = _luminance(a), _luminance(b)
    temp_map = np.abs(la - lb)
    gxa, gya = forward_gradients(la)
    gxb, gyb = forward_gradients(lb)
    grad_map = np.hypot(gxa - gxb, gya - gyb)
    return {
        "temp_map": temp_map,
        "grad_map": grad_map,
        "temp_mae": float(temp_map.mean()),
        "grad_mae": float(grad_map.mean()),
    }


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    temp_mae: float
    grad_mae: float
    maps: dict = field(default_factory=dict)


def metric_report(a: np.ndarray, b: np.ndarray, peak: float = 1.0,
                  with_maps: bool = False) -> MetricReport:
    d = difference_maps(a, b)
    return MetricReport(
        psnr=psnr_all(a, b, peak),
        ssim=ssim(a, b, data_range=peak),
        temp_mae=d["temp_mae"],
        grad_mae=d["grad_mae"],
        maps={"temp_map": d["temp_map"], "grad_map": d["grad_map"]} if with_maps else {},
    )
