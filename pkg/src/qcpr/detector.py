"""Photon detection chain for the probe/reference pair.

Per plane: correlated shot noise on the propagation grid -> independent
binomial thinning per channel -> reference window displaced by the
misalignment -> b x b binning -> optional k x k averaging filter.

Random streams are Philox generators keyed by ``(seed, plane, stage,
channel)``; draws inside a stream follow raster order, so results do not
depend on how work is scheduled.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from scipy.special import ndtr

from .optics import BeamTriples

log = logging.getLogger(__name__)

CLAMP_WARN_FRACTION = 1e-3

_SHOT, _EFFICIENCY = 0, 1
PROBE, REFERENCE = 0, 1


@dataclass(frozen=True)
class DetectorModel:
    """Detection-chain parameters.

    ``misalignment`` and ``pair_spread`` are in coherence lengths;
    ``coherence_pixels`` is the number of propagation pixels per coherence
    length and ``bin`` the detection pixel side in propagation pixels.
    ``pair_spread`` > 0 displaces each twin photon by a Gaussian offset of
    that standard deviation; 0 keeps twins in the same propagation pixel.
    """

    efficiency: float = 0.95
    misalignment: float = 0.25
    coherence_pixels: int = 5
    bin: int = 5
    avg_k: int = 1
    shot_noise: bool = True
    seed: int = 0
    detection_pixels: int | None = None
    pair_spread: float = 0.0

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ValueError(f"efficiency must be in (0, 1], got {self.efficiency}")
        if self.misalignment < 0:
            raise ValueError(f"misalignment must be >= 0, got {self.misalignment}")
        if self.coherence_pixels < 1 or self.bin < 1 or self.avg_k < 1:
            raise ValueError("coherence_pixels, bin and avg_k must all be >= 1")
        if self.pair_spread < 0:
            raise ValueError(f"pair_spread must be >= 0, got {self.pair_spread}")

    @property
    def shift_pixels(self) -> int:
        """Reference displacement, rounded half-up to whole propagation pixels."""
        return int(math.floor(self.misalignment * self.coherence_pixels + 0.5))

    @property
    def effective_misalignment(self) -> float:
        return self.shift_pixels / self.coherence_pixels

    @property
    def scale(self) -> float:
        """Detection-pixel side in coherence lengths (d)."""
        return self.bin / self.coherence_pixels

    @property
    def effective_scale(self) -> float:
        """d' = avg_k * d after the averaging filter."""
        return self.avg_k * self.scale

    def with_(self, **changes) -> "DetectorModel":
        return replace(self, **changes)


@dataclass
class DetectionSet:
    """Detected frames, shape ``(3, m, m)`` per channel ordered ``(-dz, 0, +dz)``."""

    probe: np.ndarray
    reference: np.ndarray
    pitch: float
    dz: float
    model: DetectorModel
    meta: dict = field(default_factory=dict)


def stream(seed: int, plane: int, stage: int, channel: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(plane, stage, channel))
    return np.random.Generator(np.random.Philox(seq))


def _rounded_gaussian_pmf(sigma: float) -> np.ndarray:
    half = int(math.ceil(6 * sigma))
    j = np.arange(-half, half + 1)
    pmf = ndtr((j + 0.5) / sigma) - ndtr((j - 0.5) / sigma)
    return pmf / pmf.sum()


def _displaced_twins(counts: np.ndarray, sigma: float, rng) -> np.ndarray:
    """Histogram of twins displaced by rounded Gaussian offsets (periodic)."""
    ny, nx = counts.shape
    source = np.repeat(np.arange(counts.size), counts.ravel())
    ys, xs = np.divmod(source, nx)
    dy = np.rint(rng.normal(0.0, sigma, source.size)).astype(np.int64)
    dx = np.rint(rng.normal(0.0, sigma, source.size)).astype(np.int64)
    target = ((ys + dy) % ny) * nx + (xs + dx) % nx
    return np.bincount(target, minlength=counts.size).reshape(counts.shape)


def _correlated_counts(probe, reference, rng, spread_px=0.0):
    probe = np.asarray(probe, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if probe.shape != reference.shape:
        raise ValueError(f"shape mismatch {probe.shape} vs {reference.shape}")
    if (probe < 0).any() or (reference < 0).any():
        raise ValueError("intensities must be nonnegative")
    ref_counts = rng.poisson(reference)
    if spread_px > 0:
        pmf = _rounded_gaussian_pmf(spread_px)
        expected = ndimage.convolve1d(reference, pmf, axis=0, mode="wrap")
        expected = ndimage.convolve1d(expected, pmf, axis=1, mode="wrap")
        increment = _displaced_twins(ref_counts, spread_px, rng) - expected
    else:
        increment = ref_counts - reference
    raw = unbiased_round(probe + increment, rng)
    clamped = int(np.count_nonzero(raw < 0))
    return np.maximum(raw, 0).astype(np.int64), ref_counts.astype(np.int64), clamped


def unbiased_round(values, rng) -> np.ndarray:
    """Round down, then up with probability equal to the fractional part.

    The expectation equals ``values`` exactly; plain rounding would act as a
    dead zone on sub-photon differences between the two channels.
    """
    base = np.floor(values)
    return base + (rng.random(np.shape(values)) < values - base)


def add_correlated_shot_noise(probe, reference, rng, spread_px: float = 0.0):
    """Shot noise shared by both channels.

    ``N ~ Poisson(reference)`` is the reference count; the probe receives the
    same increment ``N - reference`` on top of its own expectation, rounded
    without bias (see :func:`unbiased_round`) and clamped at zero. ``rng`` is
    a Generator or an integer seed.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    p, r, _ = _correlated_counts(probe, reference, rng, spread_px)
    return p, r


def apply_efficiency(frame, efficiency: float, rng) -> np.ndarray:
    """Binomial thinning of integer counts with success probability ``efficiency``."""
    if not 0 < efficiency <= 1:
        raise ValueError(f"efficiency must be in (0, 1], got {efficiency}")
    frame = np.asarray(frame)
    if efficiency == 1:
        return frame.copy()
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return rng.binomial(frame, efficiency)


def detection_size(n: int, b: int, max_shift: int) -> int:
    return (n - 2 * abs(max_shift)) // b


def bin_with_shift(frame, b: int, shift=(0, 0), detection_pixels: int | None = None
                   ) -> np.ndarray:
    """Sum non-overlapping ``b x b`` blocks of a centered detection window.

    The window holds ``detection_pixels * b`` propagation pixels per side and
    is displaced by ``shift = (dy, dx)`` pixels. By default the window is
    the largest one that keeps a margin of ``max(|shift|)`` on both sides.
    """
    frame = np.asarray(frame)
    n = frame.shape[0]
    if frame.ndim != 2 or frame.shape[1] != n:
        raise ValueError(f"expected a square frame, got {frame.shape}")
    sy, sx = (int(s) for s in shift)
    det = detection_size(n, b, max(abs(sy), abs(sx))) if detection_pixels is None \
        else int(detection_pixels)
    width = det * b
    if det < 1 or width > n:
        raise ValueError(f"{det} detection pixels of {b} do not fit a {n}-pixel frame")
    origin = (n - width) // 2
    for s in (sy, sx):
        if origin + s < 0 or origin + s + width > n:
            raise ValueError(f"shift {s} exceeds the {origin}-pixel margin around the window")
    window = frame[origin + sy:origin + sy + width, origin + sx:origin + sx + width]
    return window.reshape(det, b, det, b).sum(axis=(1, 3))


def averaging_filter(frame, k: int) -> np.ndarray:
    """Sliding ``k x k`` mean with the window clipped at the frame edges.

    For even ``k`` the window spans offsets ``-k//2 .. k//2 - 1``.
    """
    frame = np.asarray(frame, dtype=float)
    if k < 1 or k > min(frame.shape):
        raise ValueError(f"filter size {k} invalid for a frame of shape {frame.shape}")
    if k == 1:
        return frame.copy()
    sums = ndimage.uniform_filter(frame, size=k, mode="constant", cval=0.0)
    counts = ndimage.uniform_filter(np.ones_like(frame), size=k, mode="constant", cval=0.0)
    return sums / counts


def detect(triples: BeamTriples, model: DetectorModel) -> DetectionSet:
    n = triples.spec.n
    shift = model.shift_pixels
    det = model.detection_pixels or detection_size(n, model.bin, shift)
    spread_px = model.pair_spread * model.coherence_pixels
    probe_out, ref_out = [], []
    clamped = 0
    for plane in range(3):
        ip, ir = triples.probe[plane], triples.reference[plane]
        if model.shot_noise:
            p, r, c = _correlated_counts(ip, ir, stream(model.seed, plane, _SHOT, 0), spread_px)
            clamped += c
            p = apply_efficiency(p, model.efficiency, stream(model.seed, plane, _EFFICIENCY, PROBE))
            r = apply_efficiency(r, model.efficiency,
                                 stream(model.seed, plane, _EFFICIENCY, REFERENCE))
        else:
            p, r = ip * model.efficiency, ir * model.efficiency
        p = bin_with_shift(p, model.bin, (0, 0), det)
        r = bin_with_shift(r, model.bin, (shift, shift), det)
        if model.avg_k > 1:
            p = averaging_filter(p, model.avg_k)
            r = averaging_filter(r, model.avg_k)
        probe_out.append(p)
        ref_out.append(r)
    clamp_fraction = clamped / (3 * n * n)
    if clamp_fraction > CLAMP_WARN_FRACTION:
        log.warning("probe counts clamped at zero in %.2g of pixels", clamp_fraction)
    return DetectionSet(
        probe=np.stack(probe_out), reference=np.stack(ref_out),
        pitch=model.bin * triples.spec.pitch, dz=triples.dz, model=model,
        meta={"shift_pixels": shift, "scale_d": model.scale,
              "effective_d": model.effective_scale, "clamp_fraction": clamp_fraction,
              "detection_pixels": det},
    )
