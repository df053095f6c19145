"""Square sampling grids, unitary 2-D DFTs and spectral bookkeeping.

Spatial arrays are stored *centered*: the physical origin sits at index
``n // 2`` on both axes, which is the natural layout for images.  Frequency
arrays use the FFT layout (zero frequency at index 0); use
:func:`centered` / :func:`uncentered` when a centered spectrum is wanted.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft


@dataclass(frozen=True)
class GridSpec:
    """An ``n x n`` grid of side ``extent`` (m) carrying light of ``wavelength`` (m)."""

    n: int
    extent: float
    wavelength: float

    @property
    def pitch(self) -> float:
        return self.extent / self.n

    @property
    def wavenumber(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def coordinates(self) -> np.ndarray:
        """1-D centered coordinates (m); the origin is at index ``n // 2``."""
        return (np.arange(self.n) - self.n // 2) * self.pitch

    def frequencies(self) -> "FrequencyGrid":
        return frequency_grid(self.n, self.extent)


@dataclass(frozen=True)
class ComplexField:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.spec.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.spec.shape}"
            )

    def power(self) -> float:
        """Total power, sum |u|^2 * pitch^2."""
        return float(np.sum(np.abs(self.values) ** 2) * self.spec.pitch**2)


@dataclass(frozen=True)
class RealField:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.spec.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.spec.shape}"
            )


class FrequencyGrid(NamedTuple):
    """Spatial frequencies (cycles/m) in FFT layout; ``qy`` varies along axis 0."""

    qx: np.ndarray
    qy: np.ndarray
    spacing: float

    @property
    def q2(self) -> np.ndarray:
        return self.qx**2 + self.qy**2

    @property
    def q_max(self) -> float:
        return float(np.max(np.abs(self.qx)))


def make_grid(n: int, extent: float, wavelength: float) -> GridSpec:
    n_int = int(n)
    if n_int != n or n_int < 8:
        raise ValueError(f"grid size must be an integer >= 8, got {n!r}")
    for name, value in (("extent", extent), ("wavelength", wavelength)):
        if not np.isfinite(value) or value <= 0:
            raise ValueError(f"{name} must be a positive finite length in meters, got {value!r}")
    if wavelength >= extent:
        raise ValueError(
            f"wavelength {wavelength!r} m is not smaller than the grid extent {extent!r} m"
        )
    return GridSpec(n=n_int, extent=float(extent), wavelength=float(wavelength))


def frequency_grid(n: int, extent: float) -> FrequencyGrid:
    q = sfft.fftfreq(n, d=extent / n)
    qx = q[np.newaxis, :]
    qy = q[:, np.newaxis]
    return FrequencyGrid(qx=np.broadcast_to(qx, (n, n)), qy=np.broadcast_to(qy, (n, n)),
                         spacing=1.0 / extent)


def centered(spectrum: np.ndarray) -> np.ndarray:
    """FFT layout -> centered layout (zero frequency at ``n // 2``)."""
    return sfft.fftshift(spectrum, axes=(-2, -1))


def uncentered(spectrum: np.ndarray) -> np.ndarray:
    return sfft.ifftshift(spectrum, axes=(-2, -1))


def unitary_fft(field: ComplexField, direction: str = "forward") -> ComplexField:
    """Unitary 2-D DFT of the field values.

    The result is in FFT layout and carries the same :class:`GridSpec`; it is
    bookkeeping for spectra, not a physical propagation step.
    """
    values = np.asarray(field.values)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError(f"unitary_fft needs a square 2-D array, got shape {values.shape}")
    if direction == "forward":
        out = sfft.fft2(values, norm="ortho")
    elif direction == "inverse":
        out = sfft.ifft2(values, norm="ortho")
    else:
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    return ComplexField(field.spec, out)


def intensity(field: ComplexField) -> RealField:
    u = field.values
    return RealField(field.spec, u.real**2 + u.imag**2)


class RadialSpectrum(NamedTuple):
    q: np.ndarray        # annulus centers (cycles/m)
    power: np.ndarray    # mean |F|^2 / N per annulus
    counts: np.ndarray   # number of frequency samples per annulus
    edges: np.ndarray    # annulus edges (cycles/m)


def radial_power_spectrum(values: np.ndarray, pitch: float) -> RadialSpectrum:
    """Azimuthally averaged power spectrum of a real map.

    The mean is removed first. Annuli are one frequency spacing wide, the
    first one centered on zero frequency. With the unitary normalization,
    ``sum(power * counts)`` equals the spatial variance of the map.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError(f"radial_power_spectrum needs a square map, got {values.shape}")
    n = values.shape[0]
    spectrum = sfft.fft2(values - values.mean(), norm="ortho")
    power2d = (spectrum.real**2 + spectrum.imag**2) / values.size
    freqs = frequency_grid(n, n * pitch)
    dq = freqs.spacing
    radius = np.sqrt(freqs.q2) / dq
    index = np.floor(radius + 0.5).astype(int).ravel()
    nbins = index.max() + 1
    counts = np.bincount(index, minlength=nbins)
    sums = np.bincount(index, weights=power2d.ravel(), minlength=nbins)
    with np.errstate(invalid="ignore", divide="ignore"):
        power = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    centers = np.arange(nbins) * dq
    edges = (np.arange(nbins + 1) - 0.5) * dq
    edges[0] = 0.0
    return RadialSpectrum(q=centers, power=power, counts=counts, edges=edges)


def crop_border(values: np.ndarray, fraction: float = 0.05) -> np.ndarray:
    """Drop ``round(fraction * side)`` pixels from every edge of the last two axes."""
    m = int(round(fraction * values.shape[-1]))
    if m == 0:
        return values
    return values[..., m:-m, m:-m]
