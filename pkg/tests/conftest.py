"""Shared fixtures: small grids for unit tests and cached desk-scale simulations."""
from __future__ import annotations

import copy
import math

import numpy as np
import pytest

from qcpr.config import ExperimentConfig, builtin_raw
from qcpr.optics import simulate_focus
from qcpr.wavefield import make_grid

DESK_PHOTONS_PER_DETECTION_PIXEL = 100.0
DESK_BIN = 5


def tiny_raw(**run) -> dict:
    """A 64-pixel configuration that runs end to end in about a second."""
    raw = {
        "name": "tiny",
        "grid": {"n": 64, "extent_m": 7.5e-5, "wavelength_m": 6.4e-7},
        "source": {"modes": 8, "coherence_length_m": 7.2e-6},
        "optics": {"focal_length_m": 1e-2, "delta_z_m": [1e-5, 5e-5]},
        "object": {"kind": "nine_squares", "height_rad": math.pi / 4},
        "detector": {"photons_per_detection_pixel": 100.0},
        "run": {"kind": "defocus_sweep", "seed": 3},
    }
    raw["run"].update(run)
    return raw


@pytest.fixture
def tiny_config_raw():
    return copy.deepcopy(tiny_raw())


@pytest.fixture
def small_grid():
    return make_grid(64, 7.5e-5, 6.4e-7)


@pytest.fixture(scope="session")
def desk_config():
    """The desk-scale configuration shared by the defocus studies."""
    return ExperimentConfig.from_dict(builtin_raw("fig5_sweep"))


@pytest.fixture(scope="session")
def desk_focus(desk_config):
    """Object-free on-focus frames, L = 400 modes, 4 photons per propagation pixel."""
    cfg = desk_config
    return simulate_focus(cfg.source_model(), cfg.focal_length, cfg.phase_object(height=0.0),
                          DESK_PHOTONS_PER_DETECTION_PIXEL / DESK_BIN**2)


@pytest.fixture(scope="session")
def family_focus():
    """Object-free on-focus frames of the correlation-family scenario (L = 2000)."""
    cfg = ExperimentConfig.from_dict(builtin_raw("fig3_residual_noise"))
    return simulate_focus(cfg.source_model(), cfg.focal_length, cfg.phase_object(height=0.0), 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ------------------------------------------------------------ acceptance report

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
