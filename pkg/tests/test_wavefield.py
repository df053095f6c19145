import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcpr.wavefield import (ComplexField, crop_border, frequency_grid, intensity, make_grid,
                            radial_power_spectrum, unitary_fft)


def test_desk_grid_pitch():
    grid = make_grid(512, 6e-4, 6.4e-7)
    assert grid.pitch == pytest.approx(1.171875e-6, rel=1e-15)
    assert grid.shape == (512, 512)


def test_frequency_spacing():
    freqs = frequency_grid(100, 6e-4)
    assert freqs.spacing == pytest.approx(1666.6667, rel=1e-6)
    assert freqs.qx[0, 1] == pytest.approx(freqs.spacing)
    assert freqs.q_max == pytest.approx(50 * freqs.spacing)


def test_coordinates_origin_at_center():
    grid = make_grid(64, 1e-4, 5e-7)
    x = grid.coordinates()
    assert x[32] == 0.0
    assert x[33] - x[32] == pytest.approx(grid.pitch)


@pytest.mark.parametrize("n, extent, wavelength", [
    (4, 1e-3, 5e-7), (64.5, 1e-3, 5e-7), (64, -1e-3, 5e-7), (64, 1e-3, 0.0),
    (64, 1e-3, float("nan")), (64, 1e-6, 2e-6),
])
def test_make_grid_rejects_bad_input(n, extent, wavelength):
    with pytest.raises(ValueError):
        make_grid(n, extent, wavelength)


def test_field_shape_checked():
    grid = make_grid(16, 1e-4, 5e-7)
    with pytest.raises(ValueError):
        ComplexField(grid, np.zeros((8, 8), complex))


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_unitary_fft_preserves_norm_and_inverts(seed):
    rng = np.random.default_rng(seed)
    grid = make_grid(32, 1e-4, 5e-7)
    u = ComplexField(grid, rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32)))
    spectrum = unitary_fft(u)
    assert np.sum(np.abs(spectrum.values) ** 2) == pytest.approx(np.sum(np.abs(u.values) ** 2),
                                                                  rel=1e-12)
    back = unitary_fft(spectrum, "inverse")
    np.testing.assert_allclose(back.values, u.values, atol=1e-12)


def test_unitary_fft_rejects_direction():
    grid = make_grid(16, 1e-4, 5e-7)
    with pytest.raises(ValueError):
        unitary_fft(ComplexField(grid, np.zeros((16, 16), complex)), "sideways")


def test_intensity_is_abs_squared():
    grid = make_grid(16, 1e-4, 5e-7)
    values = np.full((16, 16), 3 + 4j)
    assert np.all(intensity(ComplexField(grid, values)).values == 25.0)


def test_radial_spectrum_parseval(rng):
    values = rng.normal(size=(64, 64))
    spec = radial_power_spectrum(values, 1e-6)
    assert np.sum(spec.power * spec.counts) == pytest.approx(values.var(), rel=1e-12)


def test_white_noise_spectrum_is_flat(rng):
    n, reps = 64, 120
    acc = None
    for _ in range(reps):
        spec = radial_power_spectrum(rng.normal(size=(n, n)), 1e-6)
        acc = spec.power if acc is None else acc + spec.power
    power = acc[1:n // 2] / reps
    counts = spec.counts[1:n // 2]
    # unit-variance white noise: each annulus averages to 1 / n^2
    expected = 1.0 / n**2
    stderr = expected / np.sqrt(reps * counts)
    assert np.all(np.abs(power - expected) < 5 * stderr)


def test_radial_spectrum_single_cosine():
    n, pitch = 64, 1e-6
    x = np.arange(n)
    values = np.cos(2 * math.pi * 5 * x / n)[None, :] * np.ones((n, 1))
    spec = radial_power_spectrum(values, pitch)
    assert np.argmax(spec.power) == 5
    assert spec.q[5] == pytest.approx(5 / (n * pitch))


def test_crop_border():
    a = np.arange(100.0).reshape(10, 10)
    assert crop_border(a, 0.1).shape == (8, 8)
    assert crop_border(a, 0.0) is a
    assert crop_border(np.zeros((3, 20, 20)), 0.05).shape == (3, 18, 18)
