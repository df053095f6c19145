"""Phase retrieval from defocused intensities via the transport-of-intensity equation.

Boundary conditions are periodic (spectral solver); the zero-frequency
component of every solution is set to zero, so phases are mean-free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .wavefield import frequency_grid


@dataclass(frozen=True)
class TieInput:
    intensity_focus: np.ndarray
    intensity_plus: np.ndarray
    intensity_minus: np.ndarray
    dz: float
    wavenumber: float
    pitch: float

    def __post_init__(self):
        if not self.dz > 0:
            raise ValueError(f"dz must be positive, got {self.dz}")
        shapes = {np.shape(self.intensity_focus), np.shape(self.intensity_plus),
                  np.shape(self.intensity_minus)}
        if len(shapes) != 1:
            raise ValueError(f"frames differ in shape: {sorted(shapes)}")


@dataclass(frozen=True)
class TieOptions:
    solver: str = "uniform"
    alpha: float = 0.0

    def __post_init__(self):
        if self.solver not in ("uniform", "teague"):
            raise ValueError(f"solver must be 'uniform' or 'teague', got {self.solver!r}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


def axial_derivative(i_plus, i_minus, dz: float) -> np.ndarray:
    """Central difference ``(I+ - I-) / (2 dz)``."""
    i_plus = np.asarray(i_plus, dtype=float)
    i_minus = np.asarray(i_minus, dtype=float)
    if i_plus.shape != i_minus.shape:
        raise ValueError(f"shape mismatch {i_plus.shape} vs {i_minus.shape}")
    if not dz > 0:
        raise ValueError(f"dz must be positive, got {dz}")
    return (i_plus - i_minus) / (2 * dz)


def _q2(shape, pitch):
    n = shape[-1]
    if shape[-2] != n:
        raise ValueError(f"square maps only, got {shape}")
    freqs = frequency_grid(n, n * pitch)
    return freqs, freqs.q2


def inverse_laplacian(values, pitch: float, alpha: float = 0.0) -> np.ndarray:
    """Solve ``lap(u) = values`` spectrally on a periodic square.

    With ``alpha > 0`` the kernel ``1/|q|^2`` becomes the Tikhonov form
    ``|q|^2 / (|q|^4 + alpha q_min^4)``, ``q_min`` being the frequency spacing.
    """
    values = np.asarray(values, dtype=float)
    freqs, q2 = _q2(values.shape, pitch)
    if alpha > 0:
        kernel = q2 / (q2**2 + alpha * freqs.spacing**4)
    else:
        with np.errstate(divide="ignore"):
            kernel = 1.0 / q2
    kernel[0, 0] = 0.0
    spectrum = sfft.fft2(values)
    return sfft.ifft2(spectrum * (-kernel / (4 * math.pi**2))).real


def _gradient(values, pitch):
    freqs, _ = _q2(values.shape, pitch)
    spectrum = sfft.fft2(values)
    gx = sfft.ifft2(spectrum * (2j * math.pi * freqs.qx)).real
    gy = sfft.ifft2(spectrum * (2j * math.pi * freqs.qy)).real
    return gx, gy


def _divergence(fx, fy, pitch):
    freqs, _ = _q2(fx.shape, pitch)
    return sfft.ifft2(sfft.fft2(fx) * (2j * math.pi * freqs.qx)
                      + sfft.fft2(fy) * (2j * math.pi * freqs.qy)).real


def retrieve_phase(inp: TieInput, opts: TieOptions = TieOptions()) -> np.ndarray:
    """Mean-free phase map (radians) on the detection grid.

    ``uniform`` replaces ``div(I grad phi)`` by ``mean(I0) lap(phi)``;
    ``teague`` solves for the auxiliary potential first and divides its
    gradient by ``I0`` pixel by pixel.
    """
    rhs = -inp.wavenumber * axial_derivative(inp.intensity_plus, inp.intensity_minus, inp.dz)
    i0 = np.asarray(inp.intensity_focus, dtype=float)
    if opts.solver == "uniform":
        mean_i0 = float(i0.mean())
        if not mean_i0 > 0:
            raise ValueError("on-focus intensity must have a positive mean")
        return inverse_laplacian(rhs / mean_i0, inp.pitch, opts.alpha)
    if (i0 <= 0).any():
        raise ValueError("teague solver needs a strictly positive on-focus intensity")
    potential = inverse_laplacian(rhs, inp.pitch, opts.alpha)
    gx, gy = _gradient(potential, inp.pitch)
    return inverse_laplacian(_divergence(gx / i0, gy / i0, inp.pitch), inp.pitch, opts.alpha)


def noise_artifact_amplitude(sigma, i0, dz, q, k):
    """Spectral amplitude of the phase artifact produced by white noise ``sigma``.

    ``k sigma / (4 pi^2 sqrt(2) I0 dz |q|^2)``; the ``sqrt(2)`` combines the
    independent noise of the two defocused planes.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise ValueError("spatial frequency must be positive")
    return k * sigma / (4 * math.pi**2 * math.sqrt(2) * i0 * dz * q**2)
