import numpy as np
import pytest
from scipy.stats import chisquare

from qcpr.optics import lens_far_field
from qcpr.source import (SourceModel, coherence_length, envelope, estimate_coherence,
                         generate_mode, mode_phase, source_grid, waist_for_coherence_length)
from qcpr.wavefield import make_grid


def test_coherence_length_desk_value():
    assert coherence_length(1e-2, 6.4e-7, 2e-4) == pytest.approx(7.2025e-6, rel=1e-4)


def test_coherence_length_scaling():
    base = coherence_length(1e-2, 6.4e-7, 2e-4)
    assert coherence_length(1e-2, 6.4e-7, 4e-4) == pytest.approx(base / 2)
    assert coherence_length(2e-2, 6.4e-7, 4e-4) == pytest.approx(base)


def test_waist_inverts_coherence_length():
    w = waist_for_coherence_length(1e-2, 6.4e-7, 7.2e-6)
    assert coherence_length(1e-2, 6.4e-7, w) == pytest.approx(7.2e-6, rel=1e-12)


@pytest.mark.parametrize("args", [(0, 6.4e-7, 1e-4), (1e-2, -1.0, 1e-4), (1e-2, 6.4e-7, 0)])
def test_coherence_length_rejects_nonpositive(args):
    with pytest.raises(ValueError):
        coherence_length(*args)


@pytest.fixture
def model():
    spec = source_grid(make_grid(128, 1.5e-4, 6.4e-7), 1e-2)
    return SourceModel(waist=2e-4, modes=500, master_seed=11, spec=spec)


def test_source_model_invariants(model):
    with pytest.raises(ValueError):
        SourceModel(waist=2e-4, modes=0, master_seed=1, spec=model.spec)
    with pytest.raises(ValueError):
        SourceModel(waist=model.spec.extent / 4, modes=1, master_seed=1, spec=model.spec)


def test_generate_mode_deterministic(model):
    a = generate_mode(model, 7)
    b = generate_mode(model, 7)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, generate_mode(model, 8).values)


def test_modes_share_envelope(model):
    amp = envelope(model.spec, model.waist)
    for i in (0, 3, 499):
        np.testing.assert_allclose(np.abs(generate_mode(model, i).values), amp, rtol=1e-12)


def test_mode_index_range(model):
    with pytest.raises(IndexError):
        generate_mode(model, 500)
    with pytest.raises(IndexError):
        generate_mode(model, -1)


def test_phase_histogram_uniform():
    spec = source_grid(make_grid(512, 6e-4, 6.4e-7), 1e-2)
    phase = mode_phase(SourceModel(waist=2e-4, modes=1, master_seed=1, spec=spec), 0)
    assert phase.min() >= 0 and phase.max() < 2 * np.pi
    counts, _ = np.histogram(phase, bins=64, range=(0, 2 * np.pi))
    assert chisquare(counts).pvalue > 0.01


def test_far_field_coherence_matches_target(model):
    modes = [lens_far_field(generate_mode(model, i), 1e-2) for i in range(model.modes)]
    target = coherence_length(1e-2, model.spec.wavelength, model.waist)
    report = estimate_coherence(modes, target)
    assert report.gamma[0] == pytest.approx(1.0)
    assert np.all(np.abs(report.gamma) <= 1 + 1e-12)
    assert report.relative_error < 0.10
    assert not report.low_confidence
    far = report.r > 5 * target
    assert np.all(np.abs(report.gamma[far]) < 0.1)


def test_few_modes_flagged(model):
    modes = [lens_far_field(generate_mode(model, i), 1e-2) for i in range(20)]
    report = estimate_coherence(modes, coherence_length(1e-2, model.spec.wavelength, model.waist))
    assert report.low_confidence


def test_estimate_coherence_needs_modes():
    with pytest.raises(ValueError):
        estimate_coherence([], 1e-6)
