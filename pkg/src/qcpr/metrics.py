"""Reconstruction quality and the defocus / averaging-filter studies."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .detector import DetectionSet, DetectorModel, detect
from .optics import BeamTriples, PhaseObject, image_plane_truth, simulate_triples
from .source import SourceModel
from .quantumcorr import (BORDER, CorrelationParams, eta_c_analytic, k_opt_estimate,
                          k_opt_model, nrf_empirical, nrf_model_approx, residual_variance,
                          residual_variance_model, subtract_noise)
from .tie import TieInput, TieOptions, retrieve_phase
from .wavefield import GridSpec, crop_border

NOISE_MODES = ("noiseless", "shot", "quantum", "ideal")


@dataclass
class QualityRecord:
    index: int
    dz: float
    mode: str
    correlation: float = math.nan
    nrf: float = math.nan
    nrf_stderr: float = math.nan
    k_opt: float = math.nan
    avg_k: int = 1
    effective_d: float = math.nan
    seed: int = 0
    status: str = "ok"
    message: str = ""
    runtime: float = 0.0


@dataclass
class SweepReport:
    records: list[QualityRecord]
    config: dict = field(default_factory=dict)
    phases: dict = field(default_factory=dict, repr=False)  # (index, mode) -> map

    def optimal_dz(self) -> dict[str, float]:
        best: dict[str, tuple[float, float]] = {}
        for r in self.records:
            if r.status != "ok" or math.isnan(r.correlation):
                continue
            if r.mode not in best or r.correlation > best[r.mode][0]:
                best[r.mode] = (r.correlation, r.dz)
        return {mode: dz for mode, (_, dz) in best.items()}

    def series(self, mode: str, key: str = "correlation") -> np.ndarray:
        return np.array([getattr(r, key) for r in self.records if r.mode == mode])

    def dz_values(self, mode: str) -> np.ndarray:
        return np.array([r.dz for r in self.records if r.mode == mode])


@dataclass
class Scenario:
    """Everything needed to go from source modes to a reconstructed phase.

    ``mean_photons`` is per propagation pixel; ``seed`` drives the detector
    streams (the source keeps its own ``master_seed``).
    """

    grid: GridSpec
    source: SourceModel
    f: float
    obj: PhaseObject
    detector: DetectorModel
    mean_photons: float
    tie: TieOptions = field(default_factory=TieOptions)
    seed: int = 0
    nrf_realizations: int = 4
    border: float = BORDER

    def triples(self, dz_list: Sequence[float]) -> list[BeamTriples]:
        return simulate_triples(self.source, self.f, dz_list, self.obj, self.mean_photons)


def correlation_coefficient(reconstructed, truth, border: float = BORDER) -> float:
    """Pearson correlation of two maps after dropping a ``border`` frame."""
    a = crop_border(np.asarray(reconstructed, dtype=float), border).ravel()
    b = crop_border(np.asarray(truth, dtype=float), border).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {np.shape(reconstructed)} vs {np.shape(truth)}")
    a = a - a.mean()
    b = b - b.mean()
    na, nb = float(a @ a), float(b @ b)
    if na == 0 or nb == 0:
        raise ValueError("correlation undefined for a zero-variance map")
    return float(np.clip((a @ b) / math.sqrt(na * nb), -1.0, 1.0))


def block_mean(values: np.ndarray, b: int, detection_pixels: int) -> np.ndarray:
    n = values.shape[-1]
    width = detection_pixels * b
    o = (n - width) // 2
    window = values[o:o + width, o:o + width]
    return window.reshape(detection_pixels, b, detection_pixels, b).mean(axis=(1, 3))


def truth_at_detection(obj: PhaseObject, detection: DetectionSet) -> np.ndarray:
    """Ground truth at detection resolution, in image-plane orientation."""
    return block_mean(image_plane_truth(obj), detection.model.bin,
                      detection.meta["detection_pixels"])


def reconstruct(frames: np.ndarray, dz: float, wavenumber: float, pitch: float,
                opts: TieOptions) -> np.ndarray:
    inp = TieInput(intensity_focus=frames[1], intensity_plus=frames[2],
                   intensity_minus=frames[0], dz=dz, wavenumber=wavenumber, pitch=pitch)
    return retrieve_phase(inp, opts)


def point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def quantum_frames(ds: DetectionSet, border: float = BORDER) -> tuple[np.ndarray, float]:
    """Noise-subtracted probe frames, with the gain estimated plane by plane."""
    out, gains = [], []
    for plane in range(3):
        k = k_opt_estimate(ds.probe[plane], ds.reference[plane], border).value
        out.append(subtract_noise(ds.probe[plane], ds.reference[plane], k))
        gains.append(k)
    return np.stack(out), float(np.mean(gains))


def focus_nrf(triples: BeamTriples, model: DetectorModel, realizations: int,
              border: float = BORDER):
    """NRF on the on-focus plane, pooled over independent detector seeds.

    A pure phase object leaves the on-focus intensity untouched, so this
    plane measures the noise alone.
    """
    probe, reference = [], []
    for r in range(realizations):
        ds = detect(triples, model.with_(seed=point_seed(model.seed, 10_000 + r)))
        probe.append(ds.probe[1])
        reference.append(ds.reference[1])
    return nrf_empirical(np.stack(probe), np.stack(reference), border, window=model.avg_k)


def _evaluate(scenario: Scenario, tr: BeamTriples, index: int, modes: Sequence[str],
              model: DetectorModel, phases: dict) -> list[QualityRecord]:
    wavenumber = scenario.grid.wavenumber
    records = []
    cache: dict[str, DetectionSet] = {}

    def detection(kind):
        if kind not in cache:
            if kind == "noiseless":
                m = model.with_(shot_noise=False)
            elif kind == "ideal":
                m = model.with_(efficiency=1.0, misalignment=0.0)
            else:
                m = model
            cache[kind] = detect(tr, m)
        return cache[kind]

    for mode in modes:
        t0 = time.perf_counter()
        rec = QualityRecord(index=index, dz=tr.dz, mode=mode, seed=model.seed,
                            avg_k=model.avg_k, effective_d=model.effective_scale)
        try:
            if mode == "noiseless":
                ds = detection("noiseless")
                frames = ds.probe
            elif mode == "shot":
                ds = detection("correlated")
                frames = ds.probe
            elif mode == "quantum":
                ds = detection("correlated")
                frames, rec.k_opt = quantum_frames(ds, scenario.border)
                est = nrf_empirical(ds.probe[1], ds.reference[1], scenario.border,
                                    window=model.avg_k)
                rec.nrf, rec.nrf_stderr = est.value, est.stderr
            elif mode == "ideal":
                ds = detection("ideal")
                frames = subtract_noise(ds.probe, ds.reference, 1.0)
                rec.k_opt = 1.0
                est = nrf_empirical(ds.probe[1], ds.reference[1], scenario.border,
                                    window=model.avg_k)
                rec.nrf, rec.nrf_stderr = est.value, est.stderr
            else:
                raise ValueError(f"unknown noise mode {mode!r}")
            phase = reconstruct(frames, tr.dz, wavenumber, ds.pitch, scenario.tie)
            rec.correlation = correlation_coefficient(
                phase, truth_at_detection(scenario.obj, ds), scenario.border)
            phases[(index, mode)] = phase
        except Exception as exc:  # a failed point must not stop the sweep
            rec.status, rec.message = "error", f"{type(exc).__name__}: {exc}"
        rec.runtime = time.perf_counter() - t0
        records.append(rec)
    return records


def sweep_defocus(scenario: Scenario, dz_list: Sequence[float],
                  noise_modes: Sequence[str] = NOISE_MODES,
                  triples: Sequence[BeamTriples] | None = None) -> SweepReport:
    """Correlation coefficient for every (dz, noise mode) pair.

    All noise modes at one sweep point share the optical ensemble and the
    shot-noise draw.
    """
    if triples is None:
        triples = scenario.triples(dz_list)
    records, phases = [], {}
    for j, tr in enumerate(triples):
        model = scenario.detector.with_(seed=point_seed(scenario.seed, j))
        records.extend(_evaluate(scenario, tr, j, noise_modes, model, phases))
    return SweepReport(records=records, config={"dz": [float(d) for d in dz_list],
                                                "noise_modes": list(noise_modes)},
                       phases=phases)


def averaging_filter_study(scenario: Scenario, k_list: Sequence[int], dz: float,
                           triples: BeamTriples | None = None) -> SweepReport:
    """Classical vs noise-subtracted reconstructions for each filter size.

    The reported NRF for each ``k`` is measured on the on-focus plane,
    pooled over ``scenario.nrf_realizations`` detector seeds.
    """
    tr = triples if triples is not None else scenario.triples([dz])[0]
    records, phases = [], {}
    for j, k in enumerate(k_list):
        model = scenario.detector.with_(avg_k=int(k), seed=point_seed(scenario.seed, 0))
        recs = _evaluate(scenario, tr, j, ("shot", "quantum"), model, phases)
        est = focus_nrf(tr, model, scenario.nrf_realizations, scenario.border)
        for rec in recs:
            if rec.mode == "quantum":
                rec.nrf, rec.nrf_stderr = est.value, est.stderr
        records.extend(recs)
    return SweepReport(records=records, config={"dz": float(dz), "k": [int(k) for k in k_list]},
                       phases=phases)


def record_row(rec: QualityRecord) -> dict:
    row = asdict(rec)
    row.pop("runtime")
    return row


# ------------------------------------------------------ correlation statistics

@dataclass
class FamilyRecord:
    """Noise statistics of one (d, efficiency, misalignment) detector setting.

    ``eta_c`` is the sharp-correlation value at the misalignment actually
    realized on the pixel grid, which is what the pipeline implements.
    """

    d: float
    efficiency: float
    misalignment: float
    bin: int
    shift_pixels: int
    eta_c: float
    nrf: float
    nrf_stderr: float
    nrf_model: float
    k_opt: float
    k_opt_stderr: float
    k_opt_model: float
    residual: float
    residual_stderr: float
    residual_model: float
    k_scan_argmin: float = math.nan


def bin_for_scale(d: float, coherence_pixels: int) -> int:
    b = round(d * coherence_pixels)
    if b < 1 or not math.isclose(b, d * coherence_pixels, rel_tol=1e-9):
        raise ValueError(f"d = {d} is not a whole number of pixels at "
                         f"{coherence_pixels} pixels per coherence length")
    return int(b)


def detect_pooled(triples: BeamTriples, model: DetectorModel, realizations: int):
    """Probe and reference frames of ``realizations`` independent detections.

    Returns arrays of shape ``(3 * realizations, m, m)``.
    """
    probe, reference = [], []
    for r in range(realizations):
        ds = detect(triples, model.with_(seed=point_seed(model.seed, r)))
        probe.append(ds.probe)
        reference.append(ds.reference)
    return np.concatenate(probe), np.concatenate(reference)


def correlation_family_study(focus: BeamTriples, d_list, efficiencies, misalignments,
                             coherence_pixels: int = 4,
                             photons_per_detection_pixel: float = 100.0,
                             realizations: int = 4, seed: int = 0,
                             border: float = BORDER, k_values=None) -> list[FamilyRecord]:
    """Empirical NRF, optimal gain and residual noise over a detector grid.

    ``focus`` holds object-free frames; they are rescaled for every bin size
    so that each detection pixel receives ``photons_per_detection_pixel``.
    With ``k_values`` the residual is also scanned over trial gains and the
    minimizing gain is reported as ``k_scan_argmin``.
    """
    records = []
    index = 0
    for d in d_list:
        b = bin_for_scale(d, coherence_pixels)
        tr = focus.scaled(photons_per_detection_pixel / b**2)
        for eta in efficiencies:
            for eps in misalignments:
                model = DetectorModel(efficiency=eta, misalignment=eps,
                                      coherence_pixels=coherence_pixels, bin=b,
                                      seed=point_seed(seed, index))
                index += 1
                probe, ref = detect_pooled(tr, model, realizations)
                eta_c = eta_c_analytic(d, model.effective_misalignment, sigma=0)
                params = CorrelationParams(efficiency=eta, eta_c=eta_c)
                nrf = nrf_empirical(probe, ref, border)
                k = k_opt_estimate(probe, ref, border)
                res = residual_variance(probe, ref, k.value, border)
                k_min = math.nan
                if k_values is not None:
                    scan = residual_scan(probe, ref, k_values, border)
                    k_min = float(np.asarray(k_values)[int(np.argmin(scan))])
                records.append(FamilyRecord(
                    d=float(d), efficiency=float(eta), misalignment=float(eps), bin=b,
                    shift_pixels=model.shift_pixels, eta_c=eta_c,
                    nrf=nrf.value, nrf_stderr=nrf.stderr, nrf_model=nrf_model_approx(params),
                    k_opt=k.value, k_opt_stderr=k.stderr, k_opt_model=k_opt_model(params),
                    residual=res.value, residual_stderr=res.stderr,
                    residual_model=residual_variance_model(params), k_scan_argmin=k_min))
    return records


def residual_scan(probe, reference, k_values, border: float = BORDER) -> np.ndarray:
    """Residual variance (units of mean probe count) for each trial gain."""
    return np.array([residual_variance(probe, reference, float(k), border).value
                     for k in k_values])


def analytic_nrf_curves(d_grid, efficiencies, misalignments, sigma=None) -> list[dict]:
    """``1 - eta0 eta_c(d, eps)`` on a grid; ``sigma=None`` uses the default width."""
    rows = []
    for eta in efficiencies:
        for eps in misalignments:
            for d in d_grid:
                eta_c = (eta_c_analytic(d, eps) if sigma is None
                         else eta_c_analytic(d, eps, sigma=sigma))
                rows.append({"d": float(d), "efficiency": float(eta),
                             "misalignment": float(eps), "eta_c": eta_c,
                             "nrf_model": 1 - eta * eta_c})
    return rows
