"""Twin-beam correlation model and the matching empirical estimators.

Lengths in the analytic model are in units of the cross-coherence length:
``d`` is the detection-cell side and ``eps`` the misalignment, applied
equally along both axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr

from .wavefield import crop_border

#: Gaussian standard deviation of the pair cross-correlation when lengths
#: are measured in units of its full width at half maximum.
FWHM_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
BORDER = 0.05


class Estimate(NamedTuple):
    value: float
    stderr: float
    n: int


@dataclass(frozen=True)
class CorrelationParams:
    efficiency: float
    eta_c: float
    tau: float = 1.0
    mean_photons: float = 0.0
    modes: float = math.inf

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ValueError(f"efficiency must be in (0, 1], got {self.efficiency}")
        if not 0 <= self.eta_c <= 1:
            raise ValueError(f"eta_c must be in [0, 1], got {self.eta_c}")
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.mean_photons < 0 or not self.modes > 0:
            raise ValueError("mean_photons must be >= 0 and modes > 0")


@dataclass
class NoiseReport:
    nrf: Estimate
    nrf_model: float
    k_opt: Estimate
    k_opt_model: float
    residual: Estimate
    residual_model: float


def _antiderivative_cdf(t):
    # integral of the standard normal CDF: t * Phi(t) + phi(t)
    return t * ndtr(t) + np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)


def per_axis_efficiency(d, eps, sigma=FWHM_SIGMA):
    """Probability that a twin lands in the matching cell, along one axis.

    The first photon is uniform in ``[0, d]``; its twin is displaced by
    ``eps`` plus a Gaussian of standard deviation ``sigma`` and must land in
    ``[0, d]`` as well. ``sigma = 0`` gives the sharp-correlation limit
    ``max(0, 1 - |eps| / d)``.
    """
    d = np.asarray(d, dtype=float)
    eps = np.abs(np.asarray(eps, dtype=float))
    if np.any(d <= 0):
        raise ValueError("cell size d must be positive")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    sharp = np.clip(1 - eps / d, 0.0, 1.0)
    if sigma == 0:
        return sharp
    with np.errstate(over="ignore", invalid="ignore"):
        a = (d - eps) / sigma
        b = -eps / sigma
        c = (-d - eps) / sigma
        value = sigma / d * (_antiderivative_cdf(a) - 2 * _antiderivative_cdf(b)
                             + _antiderivative_cdf(c))
    # a vanishing width overflows the closed form; its limit is the sharp value
    value = np.where(np.isfinite(value), value, sharp)
    return np.clip(value, 0.0, 1.0)


def eta_c_analytic(d, eps, sigma=FWHM_SIGMA):
    """Conditional collection efficiency for square cells of side ``d``.

    The Gaussian cross-correlation separates over the two axes, so the 2-D
    double integral is the square of :func:`per_axis_efficiency`.
    """
    value = per_axis_efficiency(d, eps, sigma) ** 2
    return float(value) if np.ndim(value) == 0 else value


def nrf_model(p: CorrelationParams) -> float:
    """``1 - eta0 eta_c + (<n>/M)(1 - eta_c)``."""
    excess = 0.0 if math.isinf(p.modes) else p.mean_photons / p.modes * (1 - p.eta_c)
    return 1 - p.efficiency * p.eta_c + excess


def nrf_model_approx(p: CorrelationParams) -> float:
    return 1 - p.efficiency * p.eta_c


def k_opt_model(p: CorrelationParams) -> float:
    return p.tau * p.eta_c * p.efficiency


def residual_variance_model(p: CorrelationParams) -> float:
    """Residual variance after optimal subtraction, in units of ``<n_P>``."""
    return 1 - k_opt_model(p) ** 2


def _pixels(frame, border):
    frame = np.asarray(frame, dtype=float)
    if frame.ndim < 2:
        raise ValueError("frames must be at least 2-D")
    cropped = crop_border(frame, border) if border else frame
    return cropped.reshape(-1, cropped.shape[-2] * cropped.shape[-1])


def _centered(rows):
    return rows - rows.mean(axis=1, keepdims=True)


def k_opt_estimate(probe, reference, border: float = BORDER) -> Estimate:
    """Gain minimizing the residual variance, ``cov(P, R) / var(R)``.

    Leading axes are pooled; each frame is centered on its own spatial mean.
    """
    p = _pixels(probe, border)
    r = _pixels(reference, border)
    if p.shape != r.shape:
        raise ValueError(f"shape mismatch {np.shape(probe)} vs {np.shape(reference)}")
    dp, dr = _centered(p).ravel(), _centered(r).ravel()
    srr = float(dr @ dr)
    if srr == 0:
        raise ZeroDivisionError("reference frame has zero variance")
    k = float(dp @ dr) / srr
    n = dp.size
    resid = dp - k * dr
    stderr = math.sqrt(float(resid @ resid) / max(n - 2, 1) / srr)
    return Estimate(k, stderr, n)


def subtract_noise(probe, reference, k: float) -> np.ndarray:
    """``probe - k * (reference - mean(reference))`` frame by frame."""
    probe = np.asarray(probe, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if probe.shape != reference.shape:
        raise ValueError(f"shape mismatch {probe.shape} vs {reference.shape}")
    mean = reference.mean(axis=(-2, -1), keepdims=True)
    return probe - k * (reference - mean)


def _variance_estimate(rows) -> tuple[float, float, int]:
    dev2 = _centered(rows).ravel() ** 2
    n = dev2.size
    return float(dev2.mean()), float(dev2.std() / math.sqrt(n)), n


def nrf_empirical(probe, reference, border: float = BORDER, window: int = 1) -> Estimate:
    """``var(P - R) / mean(P + R)`` over the pixel ensemble.

    ``window`` is the side of an averaging filter already applied to both
    frames; the ratio is rescaled by ``window**2`` so that it refers to the
    shot-noise level of the ``window x window`` aggregate.
    """
    p = _pixels(probe, border)
    r = _pixels(reference, border)
    if p.shape != r.shape:
        raise ValueError(f"shape mismatch {np.shape(probe)} vs {np.shape(reference)}")
    if p.size == 0:
        raise ValueError("empty region")
    var, var_se, n = _variance_estimate(p - r)
    total = float((p + r).mean())
    scale = window**2 / total
    return Estimate(var * scale, var_se * scale, n)


def residual_variance(probe, reference, k: float, border: float = BORDER) -> Estimate:
    """Variance of the subtracted probe in units of the mean probe count."""
    p = _pixels(probe, border)
    r = _pixels(reference, border)
    var, var_se, n = _variance_estimate(p - k * r)
    mean = float(p.mean())
    return Estimate(var / mean, var_se / mean, n)


def noise_report(probe, reference, params: CorrelationParams, border: float = BORDER
                 ) -> NoiseReport:
    k = k_opt_estimate(probe, reference, border)
    return NoiseReport(
        nrf=nrf_empirical(probe, reference, border),
        nrf_model=nrf_model(params),
        k_opt=k,
        k_opt_model=k_opt_model(params),
        residual=residual_variance(probe, reference, k.value, border),
        residual_model=residual_variance_model(params),
    )
