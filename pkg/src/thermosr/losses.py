"""Reconstruction and temperature-consistency losses, plus the deterministic
region/boundary mask extractor.

Loss functions take channel-last images, either (H, W) or (H, W, C), as torch
tensors (numpy arrays are converted). All components are nonnegative and zero
when the two images coincide. The region term compares per-region intensity
histograms through their cumulative distributions; during training the
histograms use a smooth spline assignment so the term is differentiable, while
evaluation uses hard binning. Masks are plain numpy and are computed once per
HR image, never inside the training graph.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy import ndimage

from .config import LossWeights
from .errors import InvalidInputError


@dataclass
class RegionMasks:
    """Label map (0 = unassigned, 1..K = region id) plus a boundary mask."""

    labels: np.ndarray
    boundary: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        self.boundary = np.asarray(self.boundary, dtype=bool)
        if self.labels.shape != self.boundary.shape:
            raise InvalidInputError("label map and boundary mask shapes differ")

    @property
    def region_ids(self) -> np.ndarray:
        ids = np.unique(self.labels)
        return ids[ids > 0]

    @property
    def num_regions(self) -> int:
        return int(self.region_ids.size)

    def region(self, rid: int) -> np.ndarray:
        return self.labels == rid

    def crop(self, y0: int, x0: int, h: int, w: int) -> "RegionMasks":
        return RegionMasks(
            self.labels[y0:y0 + h, x0:x0 + w].copy(),
            self.boundary[y0:y0 + h, x0:x0 + w].copy(),
            self.source_id,
        )


def _luminance_np(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    return image.mean(axis=-1) if image.ndim == 3 else image


def extract_region_masks(image: np.ndarray, bands: int = 8, min_area: int = 32,
                         source_id: str = "bands") -> RegionMasks:
    """Segment an HR image into temperature-band regions.

    Luminance is quantized into `bands` equal-width bands, each band is split
    into 4-connected components, components smaller than min_area are merged
    into the nearest surviving region, and the boundary mask marks pixels
    whose 4-neighborhood spans at least two region labels, dilated by one
    pixel. When nothing survives the whole image becomes a single region.
    """
    lum = _luminance_np(image)
    if lum.size == 0:
        return RegionMasks(np.zeros(lum.shape, np.int32), np.zeros(lum.shape, bool), source_id)
    band = np.clip(np.floor(lum * bands).astype(np.int64), 0, bands - 1)

    labels = np.zeros(lum.shape, np.int32)
    next_id = 1
    for b in range(bands):
        comp, n = ndimage.label(band == b)
        if n:
            labels[comp > 0] = comp[comp > 0] + (next_id - 1)
            next_id += n

    ids, counts = np.unique(labels, return_counts=True)
    surviving = ids[(ids > 0) & (counts >= min_area)]
    if surviving.size == 0:
        labels = np.ones(lum.shape, np.int32)
    else:
        keep = np.isin(labels, surviving)
        if not keep.all():
            _, (iy, ix) = ndimage.distance_transform_edt(~keep, return_indices=True)
            labels = labels[iy, ix]
        # cap the region count so labels stay storable in an 8-bit image
        ids, counts = np.unique(labels, return_counts=True)
        if ids.size > 255:
            order = np.argsort(counts)[::-1]
            keep_ids = set(ids[order[:255]].tolist())
            keep = np.isin(labels, list(keep_ids))
            _, (iy, ix) = ndimage.distance_transform_edt(~keep, return_indices=True)
            labels = labels[iy, ix]
        labels = _relabel_consecutive(labels)

    boundary = _label_boundary(labels)
    return RegionMasks(labels, boundary, source_id)


def _relabel_consecutive(labels: np.ndarray) -> np.ndarray:
    ids = np.unique(labels)
    ids = ids[ids > 0]
    lut = np.zeros(int(labels.max()) + 1, np.int32)
    lut[ids] = np.arange(1, ids.size + 1, dtype=np.int32)
    return lut[labels]


def _label_boundary(labels: np.ndarray) -> np.ndarray:
    """Pixels whose 4-neighborhood spans >= 2 labels, dilated by one pixel."""
    if labels.size == 0 or np.unique(labels).size < 2:
        return np.zeros(labels.shape, bool)
    seam = np.zeros(labels.shape, bool)
    seam[:-1, :] |= labels[:-1, :] != labels[1:, :]
    seam[1:, :] |= labels[1:, :] != labels[:-1, :]
    seam[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    seam[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    return ndimage.binary_dilation(seam)


def _as_tensor(image) -> torch.Tensor:
    if isinstance(image, torch.Tensor):
        t = image
    else:
        t = torch.as_tensor(np.asarray(image), dtype=torch.float64)
    if t.dim() not in (2, 3):
        raise InvalidInputError(f"expected (H, W) or (H, W, C) image, got shape {tuple(t.shape)}")
    return t


def luminance(image: torch.Tensor) -> torch.Tensor:
    return image.mean(dim=-1) if image.dim() == 3 else image


def hard_histogram(values: torch.Tensor, bins: int = 256) -> torch.Tensor:
    """Normalized counts over `bins` equal bins on [0, 1]; 1.0 lands in the last bin."""
    if values.numel() == 0:
        raise InvalidInputError("cannot build a histogram from an empty value set")
    idx = torch.clamp(torch.floor(values.detach() * bins), 0, bins - 1).long()
    hist = torch.bincount(idx, minlength=bins).to(values.dtype)
    return hist / values.numel()


def _quadratic_bspline(t: torch.Tensor) -> torch.Tensor:
    at = t.abs()
    inner = 0.75 - t * t
    outer = 0.5 * torch.clamp(1.5 - at, min=0.0) ** 2
    return torch.where(at <= 0.5, inner, outer)


def soft_histogram(values: torch.Tensor, bins: int = 256) -> torch.Tensor:
    """Differentiable histogram: each value spreads over three adjacent bins
    with quadratic-spline weights (an exact partition of unity, so the result
    sums to 1). Smooth enough in the values for finite-difference-grade
    gradients."""
    if values.numel() == 0:
        raise InvalidInputError("cannot build a histogram from an empty value set")
    p = values.reshape(-1) * bins - 0.5
    knot = torch.floor(p.detach() + 0.5)
    hist = torch.zeros(bins, dtype=values.dtype, device=values.device)
    for off in (-1.0, 0.0, 1.0):
        center = knot + off
        w = _quadratic_bspline(p - center)
        idx = torch.clamp(center, 0, bins - 1).long()
        hist = hist.index_add(0, idx, w)
    return hist / values.numel()


def region_histogram(image, mask: np.ndarray, bins: int = 256, soft: bool = False) -> torch.Tensor:
    img = _as_tensor(image)
    lum = luminance(img)
    m = torch.as_tensor(np.asarray(mask, dtype=bool), device=lum.device)
    if m.shape != lum.shape:
        raise InvalidInputError(f"mask shape {tuple(m.shape)} != image shape {tuple(lum.shape)}")
    vals = lum[m]
    if vals.numel() == 0:
        raise InvalidInputError("region mask selects no pixels")
    return soft_histogram(vals, bins) if soft else hard_histogram(vals, bins)


def wasserstein_1d(h1: torch.Tensor, h2: torch.Tensor) -> torch.Tensor:
    """L1 distance between the cumulative distributions, in bin units."""
    h1 = torch.as_tensor(h1)
    h2 = torch.as_tensor(h2)
    if h1.shape != h2.shape:
        raise InvalidInputError(f"histogram sizes differ: {h1.shape[0]} vs {h2.shape[0]}")
    return torch.cumsum(h1 - h2, dim=0).abs().sum()


def region_loss(sr, hr, masks: RegionMasks, bins: int = 256, soft: bool = True) -> torch.Tensor:
    """Mean over regions of the histogram transport distance between sr and hr."""
    sr_t = _as_tensor(sr)
    hr_t = _as_tensor(hr)
    if sr_t.shape != hr_t.shape:
        raise InvalidInputError("sr and hr shapes differ")
    lum_sr = luminance(sr_t)
    lum_hr = luminance(hr_t)
    if masks.labels.shape != tuple(lum_sr.shape):
        raise InvalidInputError(
            f"mask shape {masks.labels.shape} != image shape {tuple(lum_sr.shape)}"
        )
    total = sr_t.new_zeros(())
    count = 0
    hist = soft_histogram if soft else hard_histogram
    for rid in masks.region_ids:
        m = torch.as_tensor(masks.region(int(rid)), device=lum_sr.device)
        if not bool(m.any()):
            continue
        total = total + wasserstein_1d(hist(lum_sr[m], bins), hist(lum_hr[m], bins))
        count += 1
    if count == 0:
        warnings.warn("region loss saw no usable regions; returning 0", RuntimeWarning)
        return sr_t.new_zeros(())
    return total / count


def forward_gradients(image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Forward differences along x and y, zero at the last column/row."""
    gx = torch.zeros_like(image)
    gy = torch.zeros_like(image)
    gx[:, :-1] = image[:, 1:] - image[:, :-1]
    gy[:-1, :] = image[1:, :] - image[:-1, :]
    return gx, gy


def boundary_loss(sr, hr, masks: RegionMasks) -> torch.Tensor:
    """L1 mismatch of image gradients on the boundary mask, summed over both
    gradient directions and all channels, per boundary pixel."""
    sr_t = _as_tensor(sr)
    hr_t = _as_tensor(hr)
    if sr_t.shape != hr_t.shape:
        raise InvalidInputError("sr and hr shapes differ")
    b = torch.as_tensor(np.asarray(masks.boundary, dtype=bool), device=sr_t.device)
    n = int(b.sum())
    if n == 0:
        return sr_t.new_zeros(())
    if sr_t.dim() == 3:
        b = b.unsqueeze(-1)
    gx_s, gy_s = forward_gradients(sr_t)
    gx_h, gy_h = forward_gradients(hr_t)
    mismatch = ((gx_s - gx_h).abs() + (gy_s - gy_h).abs()) * b
    return mismatch.sum() / n


def total_loss(sr, hr, masks: RegionMasks, weights: LossWeights | None = None,
               soft: bool = True) -> dict[str, torch.Tensor]:
    """(1 - lambda) * L1 + lambda * (region + boundary); all terms returned."""
    weights = weights or LossWeights()
    sr_t = _as_tensor(sr)
    hr_t = _as_tensor(hr)
    if sr_t.shape != hr_t.shape:
        raise InvalidInputError("sr and hr shapes differ")
    rec = (sr_t - hr_t).abs().mean()
    lam = weights.lam
    if lam > 0.0:
        region = region_loss(sr_t, hr_t, masks, weights.bins, soft=soft)
        boundary = boundary_loss(sr_t, hr_t, masks)
    else:
        region = sr_t.new_zeros(())
        boundary = sr_t.new_zeros(())
    total = (1.0 - lam) * rec + lam * (region + boundary)
    return {"total": total, "rec": rec, "region": region, "boundary": boundary}
