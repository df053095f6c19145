"""Experiment configuration: JSON schema, defaults and object builders.

Every length carries its SI unit in the field name (``wavelength_m``,
``delta_z_m`` ...). Angles are radians. A config describes one study
(``run.kind``) plus the physical setup it runs on.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .detector import DetectorModel
from .metrics import Scenario
from .optics import PhaseObject, make_phase_object, max_safe_distance
from .quantumcorr import BORDER
from .source import SourceModel, source_grid, waist_for_coherence_length
from .tie import TieOptions
from .wavefield import GridSpec, make_grid

STUDY_KINDS = ("nrf_vs_d", "residual_noise", "defocus_rows", "defocus_sweep",
               "averaging_filter")
SWEEP_KINDS = ("defocus_rows", "defocus_sweep", "averaging_filter")

_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_LIST = {"type": "array", "items": _POS, "minItems": 1}
_LOG_GRID = {
    "type": "object",
    "properties": {"start": _POS, "stop": _POS, "points": {"type": "integer", "minimum": 2}},
    "required": ["start", "stop", "points"],
    "additionalProperties": False,
}
_LOG_GRID_M = {
    "type": "object",
    "properties": {"start_m": _POS, "stop_m": _POS,
                   "points": {"type": "integer", "minimum": 2}},
    "required": ["start_m", "stop_m", "points"],
    "additionalProperties": False,
}
_FRACTION = {"type": "number", "exclusiveMinimum": 0, "maximum": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "qcpr experiment",
    "type": "object",
    "required": ["name", "grid", "source", "optics", "object", "detector", "run"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "description": {"type": "string"},
        "grid": {
            "type": "object",
            "required": ["n", "extent_m", "wavelength_m"],
            "additionalProperties": False,
            "properties": {"n": {"type": "integer", "minimum": 8},
                           "extent_m": _POS, "wavelength_m": _POS},
        },
        "source": {
            "type": "object",
            "required": ["modes"],
            "additionalProperties": False,
            "properties": {"modes": {"type": "integer", "minimum": 1},
                           "waist_m": _POS, "coherence_length_m": _POS,
                           "seed": {"type": "integer", "minimum": 0}},
            "oneOf": [{"required": ["waist_m"]}, {"required": ["coherence_length_m"]}],
        },
        "optics": {
            "type": "object",
            "required": ["focal_length_m"],
            "additionalProperties": False,
            "properties": {
                "focal_length_m": _POS,
                "delta_z_m": {"oneOf": [_POS, _POS_LIST]},
                "delta_z_grid": _LOG_GRID_M,
            },
            "not": {"required": ["delta_z_m", "delta_z_grid"]},
        },
        "object": {
            "type": "object",
            "required": ["kind", "height_rad"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["nine_squares", "square", "disk", "step", "raster"]},
                "height_rad": {"type": "number"},
                "raster_path": {"type": "string"},
                "side_fraction": _FRACTION,
                "gap_fraction": _FRACTION,
                "radius_fraction": _FRACTION,
                "upsample": {"type": "integer", "minimum": 1},
            },
            "if": {"properties": {"kind": {"const": "raster"}}},
            "then": {"required": ["raster_path"]},
        },
        "detector": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "efficiency": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "misalignment": {"type": "number", "minimum": 0},
                "coherence_pixels": {"type": "integer", "minimum": 1},
                "bin": {"type": "integer", "minimum": 1},
                "avg_k": {"type": "integer", "minimum": 1},
                "shot_noise": {"type": "boolean"},
                "photons_per_detection_pixel": _POS,
                "detection_pixels": {"type": "integer", "minimum": 1},
                "pair_spread": {"type": "number", "minimum": 0},
            },
        },
        "run": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(STUDY_KINDS)},
                "seed": {"type": "integer", "minimum": 0},
                "output_dir": {"type": "string"},
                "noise_modes": {"type": "array", "minItems": 1, "uniqueItems": True,
                                "items": {"enum": ["noiseless", "shot", "quantum", "ideal"]}},
                "avg_k_list": {"type": "array", "minItems": 1,
                               "items": {"type": "integer", "minimum": 1}},
                "realizations": {"type": "integer", "minimum": 1},
                "tie_solver": {"enum": ["uniform", "teague"]},
                "tikhonov_alpha": {"type": "number", "minimum": 0},
                "border_fraction": {"type": "number", "minimum": 0, "maximum": 0.25},
                "save_phase_maps": {"type": "boolean"},
                "d_values": _POS_LIST,
                "empirical_d_values": _POS_LIST,
                "d_grid": _LOG_GRID,
                "efficiencies": {"type": "array", "minItems": 1,
                                 "items": {"type": "number", "exclusiveMinimum": 0,
                                           "maximum": 1}},
                "misalignments": {"type": "array", "minItems": 1,
                                  "items": {"type": "number", "minimum": 0}},
                "k_scan": {
                    "type": "object",
                    "properties": {"start": {"type": "number"}, "stop": {"type": "number"},
                                   "points": {"type": "integer", "minimum": 2}},
                    "required": ["start", "stop", "points"],
                    "additionalProperties": False,
                },
            },
        },
    },
}

DETECTOR_DEFAULTS = {
    "efficiency": 0.95, "misalignment": 0.25, "coherence_pixels": 5, "bin": 5,
    "avg_k": 1, "shot_noise": True, "photons_per_detection_pixel": 100.0,
    "pair_spread": 0.0,
}
RUN_DEFAULTS = {
    "seed": 0, "noise_modes": ["noiseless", "shot", "quantum", "ideal"],
    "avg_k_list": [1, 4, 6, 9], "realizations": 4, "tie_solver": "uniform",
    "tikhonov_alpha": 0.0, "border_fraction": BORDER, "save_phase_maps": True,
    "efficiencies": [0.8, 0.9, 1.0], "misalignments": [0.0, 0.5],
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _field_path(error: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in error.absolute_path)
    return path or "<root>"


def validate(raw: dict) -> None:
    source = raw.get("source") if isinstance(raw, dict) else None
    if isinstance(source, dict) and "waist_m" in source and "coherence_length_m" in source:
        raise ConfigError("invalid configuration:\n  source: waist_m and coherence_length_m "
                          "are mutually exclusive; give one of them")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{_field_path(e)}: {e.message}" for e in errors]
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines))


def parse_json(text: str, origin: str = "<config>") -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{origin}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


@dataclass
class ExperimentConfig:
    """A validated configuration with defaults filled in."""

    raw: dict

    @classmethod
    def from_dict(cls, raw: dict, seed: int | None = None) -> "ExperimentConfig":
        validate(raw)
        resolved = copy.deepcopy(raw)
        resolved["detector"] = {**DETECTOR_DEFAULTS, **raw["detector"]}
        resolved["run"] = {**RUN_DEFAULTS, **raw["run"]}
        if seed is not None:
            resolved["run"]["seed"] = int(seed)
        resolved["source"].setdefault("seed", resolved["run"]["seed"])
        cfg = cls(resolved)
        cfg._check_physics()
        return cfg

    @classmethod
    def load(cls, path, seed: int | None = None) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from exc
        raw = parse_json(text, str(path))
        obj = raw.get("object") if isinstance(raw, dict) else None
        raster = obj.get("raster_path") if isinstance(obj, dict) else None
        if isinstance(raster, str) and not Path(raster).is_absolute():
            obj["raster_path"] = str((path.parent / raster).resolve())
        return cls.from_dict(raw, seed)

    # ------------------------------------------------------------ accessors

    @property
    def name(self) -> str:
        return self.raw["name"]

    @property
    def kind(self) -> str:
        return self.raw["run"]["kind"]

    @property
    def run(self) -> dict:
        return self.raw["run"]

    @property
    def seed(self) -> int:
        return int(self.raw["run"]["seed"])

    def grid(self) -> GridSpec:
        g = self.raw["grid"]
        try:
            return make_grid(g["n"], g["extent_m"], g["wavelength_m"])
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from exc

    @property
    def focal_length(self) -> float:
        return float(self.raw["optics"]["focal_length_m"])

    def source_model(self, modes: int | None = None) -> SourceModel:
        s = self.raw["source"]
        grid = self.grid()
        waist = s.get("waist_m")
        if waist is None:
            waist = waist_for_coherence_length(self.focal_length, grid.wavelength,
                                               s["coherence_length_m"])
        try:
            return SourceModel(waist=float(waist), modes=int(modes or s["modes"]),
                               master_seed=int(s["seed"]),
                               spec=source_grid(grid, self.focal_length))
        except ValueError as exc:
            raise ConfigError(f"source: {exc}") from exc

    def phase_object(self, height: float | None = None) -> PhaseObject:
        o = dict(self.raw["object"])
        h = o.pop("height_rad") if height is None else height
        o.pop("height_rad", None)
        if "raster_path" in o:
            o["path"] = o.pop("raster_path")
        try:
            return make_phase_object(o, self.grid(), float(h))
        except ValueError as exc:
            raise ConfigError(f"object: {exc}") from exc

    def detector_model(self) -> DetectorModel:
        d = self.raw["detector"]
        return DetectorModel(
            efficiency=d["efficiency"], misalignment=d["misalignment"],
            coherence_pixels=d["coherence_pixels"], bin=d["bin"], avg_k=d["avg_k"],
            shot_noise=d["shot_noise"], seed=self.seed,
            detection_pixels=d.get("detection_pixels"), pair_spread=d["pair_spread"])

    @property
    def photons_per_propagation_pixel(self) -> float:
        d = self.raw["detector"]
        return d["photons_per_detection_pixel"] / d["bin"] ** 2

    def delta_z(self) -> list[float]:
        o = self.raw["optics"]
        if "delta_z_grid" in o:
            g = o["delta_z_grid"]
            return [float(x) for x in np.geomspace(g["start_m"], g["stop_m"], g["points"])]
        dz = o.get("delta_z_m")
        if dz is None:
            return []
        return [float(dz)] if isinstance(dz, (int, float)) else [float(x) for x in dz]

    def d_values(self) -> list[float]:
        r = self.run
        if "d_grid" in r:
            g = r["d_grid"]
            return [float(x) for x in np.geomspace(g["start"], g["stop"], g["points"])]
        return [float(x) for x in r.get("d_values", [])]

    def k_scan(self) -> list[float] | None:
        g = self.run.get("k_scan")
        if g is None:
            return None
        return [float(x) for x in np.linspace(g["start"], g["stop"], g["points"])]

    def tie_options(self) -> TieOptions:
        return TieOptions(solver=self.run["tie_solver"], alpha=self.run["tikhonov_alpha"])

    def scenario(self) -> Scenario:
        return Scenario(
            grid=self.grid(), source=self.source_model(), f=self.focal_length,
            obj=self.phase_object(), detector=self.detector_model(),
            mean_photons=self.photons_per_propagation_pixel, tie=self.tie_options(),
            seed=self.seed, nrf_realizations=self.run["realizations"],
            border=self.run["border_fraction"])

    # ------------------------------------------------------------ checks

    def _check_physics(self) -> None:
        grid = self.grid()
        dz = self.delta_z()
        if self.kind in SWEEP_KINDS and not dz:
            raise ConfigError(f"optics: run kind {self.kind!r} needs delta_z_m or delta_z_grid")
        limit = max_safe_distance(grid)
        for z in dz:
            if z >= limit:
                raise ConfigError(f"optics.delta_z_m: {z:.3e} m aliases the Fresnel transfer "
                                  f"function on this grid; maximum safe |z| is {limit:.3e} m")
        if self.kind == "averaging_filter" and len(dz) != 1:
            raise ConfigError("optics.delta_z_m: averaging_filter takes a single defocus")
        if self.kind in ("nrf_vs_d", "residual_noise") and not self.d_values():
            raise ConfigError(f"run: kind {self.kind!r} needs d_values or d_grid")
        det = self.raw["detector"]
        shift = math.floor(det["misalignment"] * det["coherence_pixels"] + 0.5)
        n_det = det.get("detection_pixels")
        if n_det is not None and n_det * det["bin"] + 2 * shift > grid.n:
            raise ConfigError(f"detector.detection_pixels: {n_det} pixels of bin {det['bin']} "
                              f"plus a {shift}-pixel shift margin exceed the {grid.n}-pixel grid")
        self.source_model()
        self.phase_object()


def builtin_names() -> list[str]:
    folder = resources.files("qcpr") / "scenarios"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def builtin_raw(name: str) -> dict:
    path = resources.files("qcpr") / "scenarios" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"no built-in scenario named {name!r}; "
                          f"available: {', '.join(builtin_names())}")
    return parse_json(path.read_text(encoding="utf-8"), f"builtin:{name}")


def builtin_scenarios() -> list[ExperimentConfig]:
    return [ExperimentConfig.from_dict(builtin_raw(n)) for n in builtin_names()]


def resolve(spec: str, seed: int | None = None) -> ExperimentConfig:
    """A config from a file path, or a built-in scenario name."""
    path = Path(spec)
    if path.suffix == ".json" or path.exists():
        return ExperimentConfig.load(path, seed)
    return ExperimentConfig.from_dict(builtin_raw(spec), seed)
