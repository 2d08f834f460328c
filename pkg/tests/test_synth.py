import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermosr.errors import ConfigurationError, InvalidInputError
from thermosr.synth import (
    ALPHA_RANGE,
    STABILITY_LIMIT,
    HeatField,
    MaterialMap,
    SceneConfig,
    generate_material_map,
    generate_pair,
    heat_step,
    heat_step_array,
    laplacian,
    simulate_heat,
    stripe_amplitude,
)


def naive_laplacian(field):
    h, w = field.shape
    out = np.zeros_like(field)
    for y in range(h):
        for x in range(w):
            out[y, x] = (
                field[max(y - 1, 0), x] + field[min(y + 1, h - 1), x]
                + field[y, max(x - 1, 0)] + field[y, min(x + 1, w - 1)]
                - 4.0 * field[y, x]
            )
    return out


# -- conduction operator --------------------------------------------------------

def test_laplacian_matches_loop_oracle(rng):
    field = rng.random((9, 13))
    assert np.allclose(laplacian(field), naive_laplacian(field), atol=1e-14)


def test_laplacian_quadratic_is_two():
    x = np.arange(11, dtype=np.float64)
    field = np.tile(x**2, (11, 1))
    lap = laplacian(field)
    assert np.all(lap[:, 1:-1] == 2.0)


def test_laplacian_constant_is_zero_including_borders():
    assert np.all(laplacian(np.full((7, 7), 3.3)) == 0.0)


def test_impulse_step_exact():
    u = np.zeros((7, 7))
    u[3, 3] = 1.0
    out = heat_step_array(u, 0.2)
    expect = np.zeros((7, 7))
    expect[3, 3] = 1.0 - 4 * 0.2
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        expect[3 + dy, 3 + dx] = 0.2
    assert np.array_equal(out, expect)


def test_stability_guard():
    with pytest.raises(ConfigurationError):
        heat_step_array(np.zeros((4, 4)), 0.3)
    heat_step_array(np.zeros((4, 4)), STABILITY_LIMIT)  # boundary value allowed


def test_energy_conserved_with_uniform_alpha(rng):
    # insulated borders: total heat only changes through the source term
    u = rng.random((24, 24))
    total0 = u.sum()
    u_end = simulate_heat(u, 0.22, steps=200)
    assert abs(u_end.sum() - total0) / total0 < 1e-9


def test_source_injects_energy_at_known_rate(rng):
    u = rng.random((16, 16))
    src = np.zeros((16, 16))
    src[4:8, 4:8] = 1e-3
    u1 = heat_step_array(u, 0.1, src)
    assert u1.sum() - u.sum() == pytest.approx(src.sum(), rel=1e-12)


@given(st.integers(0, 10**9), st.floats(min_value=0.01, max_value=0.24))
@settings(max_examples=50, deadline=None)
def test_max_principle(seed, alpha):
    u = np.random.default_rng(seed).random((12, 12))
    u1 = heat_step_array(u, alpha)
    assert u1.min() >= u.min() - 1e-12
    assert u1.max() <= u.max() + 1e-12


def test_diffusion_reaches_uniform_steady_state(rng):
    u = rng.random((16, 16))
    mean0 = u.mean()
    u_end = simulate_heat(u, 0.2, steps=5000)
    assert u_end.max() - u_end.min() < 1e-7
    assert abs(u_end.mean() - mean0) < 1e-9


def test_heat_step_advances_time():
    mat = generate_material_map(0, 64, n_shapes=0)
    f0 = HeatField(mat.emissivity.copy())
    f1 = heat_step(f0, mat)
    assert f1.time == 1
    assert np.array_equal(f1.values, heat_step_array(f0.values, mat.alpha, mat.source))


# -- material maps ----------------------------------------------------------------

def test_material_map_determinism_and_bounds():
    a = generate_material_map(42, 96, n_shapes=8)
    b = generate_material_map(42, 96, n_shapes=8)
    for name in ("albedo", "alpha", "emissivity", "source"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.alpha.max() <= STABILITY_LIMIT
    assert a.alpha.min() > 0.0
    assert 0.0 <= a.albedo.min() and a.albedo.max() <= 1.0
    assert len(a.shapes) == 8


def test_material_map_background_only():
    mat = generate_material_map(3, 64, n_shapes=0)
    assert mat.shapes == []
    assert np.unique(mat.alpha).size == 1
    assert np.all(mat.source == 0.0)


def test_material_map_rejects_tiny_canvas():
    with pytest.raises(InvalidInputError):
        generate_material_map(0, 32)


def test_stripes_are_optical_only():
    mat = generate_material_map(5, 128, n_shapes=1, kinds=("stripes",))
    (shape,) = mat.shapes
    y0, x0, y1, x1 = shape["box"]
    inside_albedo = mat.albedo[y0:y1, x0:x1]
    # striped albedo alternates two colors along x at the recorded period
    lum = inside_albedo.mean(axis=-1)
    assert np.unique(np.round(lum, 12)).size == 2
    half = shape["period"] // 2
    assert np.array_equal(lum[:, 0], lum[:, half - 1])
    assert not np.array_equal(lum[:, 0], lum[:, half])
    # while conduction properties stay flat inside the panel
    assert np.unique(mat.alpha[y0:y1, x0:x1]).size == 1
    assert np.unique(mat.emissivity[y0:y1, x0:x1]).size == 1


def test_hot_rect_adds_a_source():
    mat = generate_material_map(1, 64, n_shapes=4)  # kinds cycle, one hot_rect
    assert any(s["kind"] == "hot_rect" for s in mat.shapes)
    assert mat.source.max() > 0.0


# -- scene pairs --------------------------------------------------------------------

def test_generate_pair_shapes_and_ranges():
    cfg = SceneConfig(size=96, steps=8, scale=4, n_shapes=6)
    pair = generate_pair(11, cfg)
    assert pair.optical.shape == (96, 96, 3)
    assert pair.thermal_hr.shape == (96, 96, 3)
    assert pair.thermal_lr.shape == (24, 24, 3)
    assert pair.masks.labels.shape == (96, 96)
    assert pair.scale == 4
    assert pair.thermal_hr.min() == 0.0 and pair.thermal_hr.max() == 1.0
    assert pair.optical.min() >= 0.0 and pair.optical.max() <= 1.0
    # thermal image is single-channel data on three channels
    assert np.array_equal(pair.thermal_hr[..., 0], pair.thermal_hr[..., 2])


def test_generate_pair_is_deterministic():
    cfg = SceneConfig(size=64, steps=4, n_shapes=3)
    a = generate_pair(9, cfg)
    b = generate_pair(9, cfg)
    assert np.array_equal(a.optical, b.optical)
    assert np.array_equal(a.thermal_hr, b.thermal_hr)
    assert np.array_equal(a.thermal_lr, b.thermal_lr)
    assert np.array_equal(a.masks.labels, b.masks.labels)
    c = generate_pair(10, cfg)
    assert not np.array_equal(a.thermal_hr, c.thermal_hr)


def test_generate_pair_meta_records_provenance():
    pair = generate_pair(2, SceneConfig(size=64, steps=4, n_shapes=2))
    meta = pair.meta
    assert meta["seed"] == 2 and meta["scale"] == 4
    assert meta["degradation"]["kind"] == "bi"
    assert len(meta["shapes"]) == 2


def test_lr_is_registered_degradation_of_hr():
    from thermosr.degrade import degrade

    cfg = SceneConfig(size=64, steps=4, n_shapes=3)
    pair = generate_pair(7, cfg)
    assert np.array_equal(pair.thermal_lr, degrade(pair.thermal_hr, cfg.spec()))


def test_optical_texture_disagrees_with_thermal():
    cfg = SceneConfig(size=128, steps=12, n_shapes=1, kinds=("stripes",))
    pair = generate_pair(5, cfg)
    shape = pair.meta["shapes"][0]
    box, period = shape["box"], shape["period"]
    amp_o = stripe_amplitude(pair.optical, box, period)
    amp_t = stripe_amplitude(pair.thermal_hr, box, period)
    assert amp_o > 5.0 * amp_t
    assert amp_t < 0.1


# -- stripe amplitude probe ------------------------------------------------------------

def test_stripe_amplitude_pure_cosine_exact():
    n, period, amp = 48, 12, 0.31
    row = amp * np.cos(2 * np.pi * np.arange(n) / period)
    img = np.tile(row, (5, 1)) + 0.5
    assert stripe_amplitude(img, (0, 0, 5, n), period) == pytest.approx(amp, abs=1e-12)


def test_stripe_amplitude_flat_field_is_zero():
    img = np.full((8, 24), 0.7)
    assert stripe_amplitude(img, (0, 0, 8, 24), 8) == pytest.approx(0.0, abs=1e-12)


def test_stripe_amplitude_rejects_partial_period():
    with pytest.raises(InvalidInputError):
        stripe_amplitude(np.zeros((8, 30)), (0, 0, 8, 30), 8)
