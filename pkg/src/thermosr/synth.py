"""Synthetic scene generation: procedural material maps, explicit heat
conduction, and registered optical/thermal pairs.

A scene is a material map (albedo, diffusivity, emissivity, heat sources).
The thermal field starts at the emissivity values and evolves under
u' = u + dt * (alpha * lap(u) + source) with insulated (replicate) borders.
The optical image renders the albedo with high-frequency texture noise that is
uncorrelated with the diffusivity, so thermal structure and optical texture
disagree on purpose: striped "panel" primitives show stripes optically while
staying thermally smooth.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .degrade import DegradationSpec, degrade
from .errors import ConfigurationError, InvalidInputError
from .losses import RegionMasks, extract_region_masks

STABILITY_LIMIT = 0.25  # max(alpha) * dt bound for the explicit update
ALPHA_RANGE = (0.01, 0.24)


@dataclass
class MaterialMap:
    albedo: np.ndarray      # (H, W, 3) in [0, 1]
    alpha: np.ndarray       # (H, W) thermal diffusivity
    emissivity: np.ndarray  # (H, W) in [0, 1]
    source: np.ndarray      # (H, W) heat rate per cell
    shapes: list = field(default_factory=list)


@dataclass
class HeatField:
    values: np.ndarray
    time: int = 0


@dataclass
class ScenePair:
    optical: np.ndarray     # (sH, sW, 3)
    thermal_hr: np.ndarray  # (sH, sW, 3), grayscale replicated
    thermal_lr: np.ndarray  # (H, W, 3)
    masks: RegionMasks
    scale: int
    meta: dict = field(default_factory=dict)


def laplacian(u: np.ndarray) -> np.ndarray:
    """5-point Laplacian with replicate borders (zero-flux boundary)."""
    p = np.pad(u, 1, mode="edge")
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * u


def heat_step_array(u: np.ndarray, alpha, source=None, dt: float = 1.0) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if float(alpha.max()) * dt > STABILITY_LIMIT + 1e-12:
        raise ConfigurationError(
            f"max(alpha)*dt = {float(alpha.max()) * dt:.4f} exceeds the stability "
            f"bound {STABILITY_LIMIT}"
        )
    out = u + dt * alpha * laplacian(u)
    if source is not None:
        out = out + dt * np.asarray(source, dtype=np.float64)
    return out


def heat_step(field: HeatField, mat: MaterialMap, dt: float = 1.0) -> HeatField:
    return HeatField(heat_step_array(field.values, mat.alpha, mat.source, dt), field.time + 1)


def simulate_heat(u0: np.ndarray, alpha, source=None, steps: int = 100,
                  dt: float = 1.0) -> np.ndarray:
    u = np.asarray(u0, dtype=np.float64)
    for _ in range(steps):
        u = heat_step_array(u, alpha, source, dt)
    return u


def _box(rng, size: int, lo_frac: float, hi_frac: float) -> tuple[int, int, int, int]:
    h = int(rng.integers(int(size * lo_frac), int(size * hi_frac) + 1))
    w = int(rng.integers(int(size * lo_frac), int(size * hi_frac) + 1))
    y0 = int(rng.integers(0, size - h + 1))
    x0 = int(rng.integers(0, size - w + 1))
    return y0, x0, y0 + h, x0 + w


DEFAULT_KINDS = ("rect", "stripes", "disc", "hot_rect")


def generate_material_map(seed: int, size: int, n_shapes: int = 6,
                          kinds: tuple[str, ...] = DEFAULT_KINDS) -> MaterialMap:
    """Procedural layout: a background material plus overlapping primitives.

    Primitives cycle through `kinds`. The "stripes" primitive has striped
    albedo but spatially constant diffusivity and emissivity; "hot_rect" is a
    small region with a heat source.
    """
    if size < 64:
        raise InvalidInputError(f"size must be >= 64, got {size}")
    rng = np.random.default_rng(seed)
    albedo = np.ones((size, size, 3)) * rng.uniform(0.25, 0.6, 3)
    alpha = np.full((size, size), rng.uniform(0.05, 0.15))
    emissivity = np.full((size, size), rng.uniform(0.35, 0.55))
    source = np.zeros((size, size))
    shapes = []
    for i in range(n_shapes):
        kind = kinds[i % len(kinds)]
        color = rng.uniform(0.05, 0.95, 3)
        a = rng.uniform(*ALPHA_RANGE)
        e = rng.uniform(0.1, 0.95)
        if kind == "rect":
            y0, x0, y1, x1 = _box(rng, size, 1 / 8, 1 / 3)
            albedo[y0:y1, x0:x1] = color
            alpha[y0:y1, x0:x1] = a
            emissivity[y0:y1, x0:x1] = e
            shapes.append({"kind": kind, "box": (y0, x0, y1, x1)})
        elif kind == "disc":
            r = int(rng.integers(size // 12, size // 5))
            cy = int(rng.integers(r, size - r))
            cx = int(rng.integers(r, size - r))
            yy, xx = np.ogrid[:size, :size]
            m = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
            albedo[m] = color
            alpha[m] = a
            emissivity[m] = e
            shapes.append({"kind": kind, "center": (cy, cx), "radius": r})
        elif kind == "stripes":
            y0, x0, y1, x1 = _box(rng, size, 1 / 5, 2 / 5)
            period = int(rng.choice([8, 12, 16]))
            x1 = x0 + ((x1 - x0) // period) * period  # width = whole periods
            if x1 <= x0:
                x1 = min(x0 + period, size)
            color2 = rng.uniform(0.05, 0.95, 3)
            cols = np.arange(x0, x1)
            stripe = ((cols - x0) // (period // 2)) % 2
            albedo[y0:y1, x0:x1] = np.where(stripe[None, :, None] == 0, color, color2)
            alpha[y0:y1, x0:x1] = a
            emissivity[y0:y1, x0:x1] = e
            shapes.append({"kind": kind, "box": (y0, x0, y1, x1), "period": period})
        elif kind == "hot_rect":
            y0, x0, y1, x1 = _box(rng, size, 1 / 16, 1 / 8)
            albedo[y0:y1, x0:x1] = color
            alpha[y0:y1, x0:x1] = a
            emissivity[y0:y1, x0:x1] = min(e + 0.3, 0.98)
            source[y0:y1, x0:x1] = rng.uniform(2e-4, 6e-4)
            shapes.append({"kind": kind, "box": (y0, x0, y1, x1)})
        else:
            raise InvalidInputError(f"unknown shape kind {kind!r}")
    return MaterialMap(albedo, alpha, emissivity, source, shapes)


@dataclass
class SceneConfig:
    # steps stays small so thermal edges diffuse a little but remain sharp
    # enough that plain interpolation leaves real headroom to learn
    size: int = 256
    steps: int = 12
    scale: int = 4
    n_shapes: int = 12
    kinds: tuple[str, ...] = DEFAULT_KINDS
    texture_amp: float = 0.3
    bands: int = 8
    min_area: int = 32
    degradation: DegradationSpec | None = None

    def spec(self) -> DegradationSpec:
        return self.degradation or DegradationSpec("bi", self.scale)


def generate_pair(seed: int, cfg: SceneConfig | None = None) -> ScenePair:
    """Deterministically generate one registered optical/thermal scene pair."""
    cfg = cfg or SceneConfig()
    mat = generate_material_map(seed, cfg.size, cfg.n_shapes, cfg.kinds)
    u = simulate_heat(mat.emissivity, mat.alpha, mat.source, cfg.steps)
    lo, hi = float(u.min()), float(u.max())
    u = (u - lo) / (hi - lo) if hi > lo else np.zeros_like(u)
    thermal_hr = np.repeat(u[..., None], 3, axis=-1)

    tex_rng = np.random.default_rng((seed, 7))
    noise = tex_rng.uniform(-1.0, 1.0, (cfg.size, cfg.size, 1))
    optical = np.clip(mat.albedo * (1.0 + cfg.texture_amp * noise), 0.0, 1.0)

    spec = cfg.spec()
    masks = extract_region_masks(thermal_hr, cfg.bands, cfg.min_area,
                                 source_id=f"seed{seed}")
    return ScenePair(
        optical=optical,
        thermal_hr=thermal_hr,
        thermal_lr=degrade(thermal_hr, spec),
        masks=masks,
        scale=cfg.scale,
        meta={
            "seed": seed,
            "size": cfg.size,
            "steps": cfg.steps,
            "scale": cfg.scale,
            "shapes": mat.shapes,
            "field_range": (lo, hi),
            "degradation": spec.provenance(),
        },
    )


def stripe_amplitude(image: np.ndarray, box: tuple[int, int, int, int],
                     period: int) -> float:
    """Mean per-row oscillation amplitude at the stripe frequency inside a box.

    Uses the discrete Fourier coefficient of each row at the known stripe
    period; the box width must hold a whole number of periods for the
    frequency bin to be exact.
    """
    y0, x0, y1, x1 = box
    lum = image.mean(axis=-1) if image.ndim == 3 else image
    rows = lum[y0:y1, x0:x1].astype(np.float64)
    n = rows.shape[1]
    if n % period:
        raise InvalidInputError(f"box width {n} is not a multiple of period {period}")
    phase = np.exp(-2j * np.pi * np.arange(n) / period)
    coef = (rows * phase[None, :]).sum(axis=1) / n
    return float(np.mean(2.0 * np.abs(coef)))
