import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from qcpr import pgm
from qcpr.optics import (BeamTriples, PropagationError, OpticalTrain, apply_phase_object,
                         far_field_grid, fresnel_propagate, fresnel_transfer, image_plane_truth,
                         invert_image, lens_far_field, make_phase_object, max_safe_distance,
                         simulate_focus, simulate_triple, simulate_triples)
from qcpr.source import SourceModel, source_grid
from qcpr.wavefield import ComplexField, make_grid


def second_moment_width(intensity, pitch):
    """W such that an intensity exp(-2 x^2 / W^2) has <x^2> = W^2 / 4 along x."""
    n = intensity.shape[0]
    x = (np.arange(n) - n // 2) * pitch
    px = intensity.sum(axis=0)
    return 2 * math.sqrt(float(np.sum(px * x**2) / np.sum(px)))


def gaussian_field(grid, w):
    x = grid.coordinates()
    r2 = x[None, :] ** 2 + x[:, None] ** 2
    return ComplexField(grid, np.exp(-r2 / w**2).astype(complex))


def test_gaussian_beam_spreading():
    grid = make_grid(256, 1e-3, 6.4e-7)
    w0 = 2e-5
    z_r = math.pi * w0**2 / grid.wavelength
    field = gaussian_field(grid, w0)
    for z in (1e-3, 2e-3, 4e-3):
        out = fresnel_propagate(field, z)
        width = second_moment_width(np.abs(out.values) ** 2, grid.pitch)
        assert width == pytest.approx(w0 * math.sqrt(1 + (z / z_r) ** 2), rel=0.01)


def test_lens_fourier_pair_width():
    obj_grid = make_grid(256, 3e-4, 6.4e-7)
    f = 1e-2
    spec = source_grid(obj_grid, f)
    w = 2e-4
    far = lens_far_field(gaussian_field(spec, w), f)
    assert far.spec.extent == pytest.approx(obj_grid.extent, rel=1e-12)
    width = second_moment_width(np.abs(far.values) ** 2, far.spec.pitch)
    assert width == pytest.approx(f * spec.wavelength / (math.pi * w), rel=0.01)


def test_propagation_conserves_power(rng):
    grid = make_grid(128, 3e-4, 6.4e-7)
    u = ComplexField(grid, rng.normal(size=(128, 128)) + 1j * rng.normal(size=(128, 128)))
    z = 0.5 * max_safe_distance(grid)
    assert fresnel_propagate(u, z).power() == pytest.approx(u.power(), rel=1e-12)
    assert fresnel_propagate(u, -z).power() == pytest.approx(u.power(), rel=1e-12)
    spec = source_grid(grid, 1e-2)
    v = ComplexField(spec, u.values)
    assert lens_far_field(v, 1e-2).power() == pytest.approx(v.power(), rel=1e-12)


def test_propagation_round_trip(rng):
    grid = make_grid(64, 1e-4, 6.4e-7)
    u = ComplexField(grid, rng.normal(size=(64, 64)) + 0j)
    z = 0.3 * max_safe_distance(grid)
    back = fresnel_propagate(fresnel_propagate(u, z), -z)
    np.testing.assert_allclose(back.values, u.values, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_propagation_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    grid = make_grid(32, 5e-5, 6.4e-7)
    u = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
    v = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
    z = 0.4 * max_safe_distance(grid)

    def prop(x):
        return fresnel_propagate(ComplexField(grid, x), z).values

    np.testing.assert_allclose(prop(a * u + b * v), a * prop(u) + b * prop(v),
                               rtol=1e-12, atol=1e-12 * (abs(a) + abs(b) + 1) * 10)


def test_zero_distance_is_identity(rng):
    grid = make_grid(32, 5e-5, 6.4e-7)
    u = ComplexField(grid, rng.normal(size=(32, 32)) + 0j)
    assert np.array_equal(fresnel_propagate(u, 0.0).values, u.values)


def test_aliasing_limit_named():
    grid = make_grid(512, 6e-4, 6.4e-7)
    limit = max_safe_distance(grid)
    assert limit == pytest.approx(6e-4**2 / (6.4e-7 * 512), rel=1e-12)
    with pytest.raises(PropagationError, match="maximum safe"):
        fresnel_transfer(grid, 1.01 * limit)


def test_optical_train_invariants():
    with pytest.raises(ValueError):
        OpticalTrain(f=0, dz=1e-4)
    with pytest.raises(ValueError):
        OpticalTrain(f=1e-2, dz=-1e-4)


def test_nine_squares_geometry():
    grid = make_grid(512, 6e-4, 6.4e-7)
    obj = make_phase_object({"kind": "nine_squares"}, grid, math.pi / 8)
    values = obj.map.values
    assert set(np.unique(values)) == {0.0, math.pi / 8}
    labels, count = ndimage.label(values > 0)
    assert count == 9
    sizes = ndimage.sum(np.ones_like(values), labels, range(1, 10))
    assert len(set(sizes)) == 1


def test_square_mean_phase():
    grid = make_grid(128, 1e-4, 6.4e-7)
    obj = make_phase_object({"kind": "square", "side_fraction": 0.5}, grid, math.pi / 4)
    assert obj.map.values.mean() == pytest.approx(math.pi / 16, rel=1e-12)


def test_object_kinds_and_errors():
    grid = make_grid(64, 1e-4, 6.4e-7)
    assert make_phase_object("disk", grid, 1.0).map.values.max() == 1.0
    assert make_phase_object("step", grid, 1.0).map.values.mean() == pytest.approx(0.5)
    with pytest.raises(ValueError):
        make_phase_object("letter", grid, 1.0)
    with pytest.raises(ValueError):
        make_phase_object("square", grid, float("inf"))


def test_raster_mask(tmp_path):
    grid = make_grid(64, 1e-4, 6.4e-7)
    mask = np.zeros((8, 8))
    mask[2:6, 2:6] = 1.0
    path = tmp_path / "m.pgm"
    pgm.write_pgm(path, mask)
    obj = make_phase_object({"kind": "raster", "path": str(path), "upsample": 2}, grid, 0.5)
    assert obj.map.values.sum() == pytest.approx(0.5 * 64)
    with pytest.raises(ValueError, match="cannot read raster"):
        make_phase_object({"kind": "raster", "path": str(tmp_path / "none.pgm")}, grid, 0.5)


def test_pure_phase_object_keeps_amplitude(rng):
    grid = make_grid(32, 5e-5, 6.4e-7)
    u = ComplexField(grid, rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32)))
    obj = make_phase_object("nine_squares", grid, 1.3)
    np.testing.assert_allclose(np.abs(apply_phase_object(u, obj).values), np.abs(u.values))


@settings(max_examples=20, deadline=None)
@given(st.integers(8, 40))
def test_invert_image_is_involution_about_origin(n):
    a = np.arange(n * n, dtype=float).reshape(n, n)
    assert np.array_equal(invert_image(invert_image(a)), a)
    c = n // 2
    assert invert_image(a)[c, c] == a[c, c]


@pytest.fixture(scope="module")
def small_ensemble():
    grid = make_grid(128, 1.5e-4, 6.4e-7)
    f = 1e-2
    source = SourceModel(waist=2e-4, modes=24, master_seed=5, spec=source_grid(grid, f))
    obj = make_phase_object("nine_squares", grid, math.pi / 4)
    return source, f, obj


def test_triples_energy_and_difference(small_ensemble):
    source, f, obj = small_ensemble
    tr = simulate_triple(source, OpticalTrain(f=f, dz=3e-5), obj, 4.0)
    assert isinstance(tr, BeamTriples)
    assert tr.probe.shape == (3, 128, 128)
    assert (tr.probe >= 0).all() and (tr.reference >= 0).all()
    totals = tr.probe.sum(axis=(1, 2))
    np.testing.assert_allclose(totals, totals[1], rtol=1e-6)
    assert tr.reference[1].mean() == pytest.approx(4.0, rel=1e-12)
    delta = tr.probe[2] - tr.probe[0]
    assert abs(delta.mean()) < 1e-6 * tr.probe[1].mean()
    assert np.abs(delta).max() > 0


def test_triples_share_one_ensemble(small_ensemble):
    source, f, obj = small_ensemble
    both = simulate_triples(source, f, [1e-5, 3e-5], obj, 4.0)
    single = simulate_triples(source, f, [3e-5], obj, 4.0)[0]
    np.testing.assert_allclose(both[1].probe, single.probe, rtol=1e-12)
    np.testing.assert_array_equal(both[0].probe[1], both[1].probe[1])


def test_reference_equals_probe_without_object(small_ensemble):
    source, f, obj = small_ensemble
    flat = make_phase_object("nine_squares", obj.map.spec, 0.0)
    tr = simulate_triples(source, f, [2e-5], flat, 2.0)[0]
    np.testing.assert_allclose(tr.probe, tr.reference, rtol=1e-12)


def test_focus_frames_and_scaling(small_ensemble):
    source, f, obj = small_ensemble
    focus = simulate_focus(source, f, obj, 3.0)
    assert focus.dz == 0.0
    np.testing.assert_array_equal(focus.probe[0], focus.probe[2])
    doubled = focus.scaled(6.0)
    np.testing.assert_allclose(doubled.reference, 2 * focus.reference)
    with pytest.raises(ValueError):
        simulate_focus(source, f, obj, 0.0)


def test_far_field_grid_mismatch_rejected(small_ensemble):
    source, f, obj = small_ensemble
    with pytest.raises(ValueError, match="does not map"):
        simulate_triples(source, 2 * f, [1e-5], obj, 1.0)
    assert far_field_grid(source.spec, f).extent == pytest.approx(obj.map.spec.extent)


def test_truth_is_inverted_object():
    grid = make_grid(64, 1e-4, 6.4e-7)
    obj = make_phase_object("step", grid, 1.0)
    truth = image_plane_truth(obj)
    # x -> -x about index 32 maps columns 32..63 onto 1..32 (column 0 is its own image)
    assert truth[:, 1:33].min() == 1.0
    assert truth[:, 33:].max() == 0.0 and truth[:, 0].max() == 0.0
