"""Command-line scenario runner.

    qcpr list
    qcpr show fig5_sweep
    qcpr run fig5_sweep --output-dir out/ --seed 3 --threads 2

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import scipy.fft as sfft

from . import __version__
from .config import ConfigError, ExperimentConfig, builtin_names, builtin_raw, resolve
from .detector import detection_size
from .metrics import (analytic_nrf_curves, averaging_filter_study, block_mean,
                      correlation_family_study, record_row, sweep_defocus)
from .optics import image_plane_truth, simulate_focus
from .outputs import ArtifactWriter

log = logging.getLogger("qcpr")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

RECORD_HEADER = ["index", "dz", "mode", "correlation", "nrf", "nrf_stderr", "k_opt",
                 "avg_k", "effective_d", "seed", "status", "message"]


@dataclasses.dataclass
class RunManifest:
    name: str
    status: str
    config: dict
    seeds: dict
    artifacts: list
    timings: dict
    environment: dict
    error: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class _Timer:
    def __init__(self):
        self.timings: dict[str, float] = {}

    def section(self, name):
        timer = self

        class _Section:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.timings[name] = timer.timings.get(name, 0.0) + time.perf_counter() - self.t0

        return _Section()


# ------------------------------------------------------------------ studies

def _write_records(cfg, writer, report, pitch, truth):
    writer.write_csv("results.csv", [record_row(r) for r in report.records], RECORD_HEADER)
    if not cfg.run["save_phase_maps"]:
        return
    writer.write_map("maps/truth", truth, pitch, extra={"kind": "ground_truth"})
    for rec in report.records:
        phase = report.phases.get((rec.index, rec.mode))
        if phase is None:
            continue
        stem = f"maps/phase_{rec.index:02d}_{rec.mode}"
        if cfg.kind == "averaging_filter":
            stem += f"_k{rec.avg_k}"
        writer.write_map(stem, phase, pitch,
                         extra={"dz_m": rec.dz, "mode": rec.mode, "avg_k": rec.avg_k,
                                "correlation": rec.correlation})


def _detection_truth(scenario):
    det = scenario.detector
    n = scenario.grid.n
    m = det.detection_pixels or detection_size(n, det.bin, det.shift_pixels)
    return block_mean(image_plane_truth(scenario.obj), det.bin, m), det.bin * scenario.grid.pitch


def _run_sweep(cfg: ExperimentConfig, writer, timer):
    scenario = cfg.scenario()
    dz = cfg.delta_z()
    with timer.section("optics_s"):
        triples = scenario.triples(dz)
    with timer.section("analysis_s"):
        if cfg.kind == "averaging_filter":
            report = averaging_filter_study(scenario, cfg.run["avg_k_list"], dz[0], triples[0])
        else:
            report = sweep_defocus(scenario, dz, cfg.run["noise_modes"], triples)
    truth, pitch = _detection_truth(scenario)
    with timer.section("write_s"):
        _write_records(cfg, writer, report, pitch, truth)
    failed = [r for r in report.records if r.status != "ok"]
    for r in failed:
        log.warning("point %d (%s) failed: %s", r.index, r.mode, r.message)
    summary = {"optimal_dz_m": report.optimal_dz(), "failed_points": len(failed)}
    return summary


def _family(cfg: ExperimentConfig, timer, d_values):
    source = cfg.source_model()
    with timer.section("optics_s"):
        focus = simulate_focus(source, cfg.focal_length, cfg.phase_object(height=0.0), 1.0)
    det = cfg.raw["detector"]
    with timer.section("analysis_s"):
        return correlation_family_study(
            focus, d_values, cfg.run["efficiencies"], cfg.run["misalignments"],
            coherence_pixels=det["coherence_pixels"],
            photons_per_detection_pixel=det["photons_per_detection_pixel"],
            realizations=cfg.run["realizations"], seed=cfg.seed,
            border=cfg.run["border_fraction"], k_values=cfg.k_scan())


def _run_nrf_vs_d(cfg: ExperimentConfig, writer, timer):
    rows = analytic_nrf_curves(cfg.d_values(), cfg.run["efficiencies"], cfg.run["misalignments"])
    for row in rows:
        sharp = analytic_nrf_curves([row["d"]], [row["efficiency"]], [row["misalignment"]],
                                    sigma=0.0)[0]
        row["eta_c_sharp"] = sharp["eta_c"]
        row["nrf_model_sharp"] = sharp["nrf_model"]
    writer.write_csv("analytic.csv", rows)
    empirical = cfg.run.get("empirical_d_values")
    if empirical:
        records = _family(cfg, timer, empirical)
        writer.write_csv("results.csv", [dataclasses.asdict(r) for r in records])
    return {"analytic_rows": len(rows)}


def _run_residual_noise(cfg: ExperimentConfig, writer, timer):
    records = _family(cfg, timer, cfg.d_values())
    writer.write_csv("results.csv", [dataclasses.asdict(r) for r in records])
    return {"settings": len(records)}


RUNNERS = {
    "nrf_vs_d": _run_nrf_vs_d,
    "residual_noise": _run_residual_noise,
    "defocus_rows": _run_sweep,
    "defocus_sweep": _run_sweep,
    "averaging_filter": _run_sweep,
}


def _environment(threads) -> dict:
    return {"qcpr": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "threads": threads}


def run_scenario(cfg: ExperimentConfig, output_dir=None, threads: int = 1) -> tuple[int, RunManifest]:
    """Execute one configured study; the manifest is always written last."""
    out = Path(output_dir or cfg.run.get("output_dir") or Path("qcpr-output") / cfg.name)
    writer = ArtifactWriter(out)
    timer = _Timer()
    status, error, summary = "complete", "", {}
    t0 = time.perf_counter()
    try:
        writer.write_json("config.json", cfg.raw, "config")
        with sfft.set_workers(threads):
            summary = RUNNERS[cfg.kind](cfg, writer, timer)
        writer.write_json("summary.json", summary, "summary")
    except Exception as exc:  # reported through the manifest and exit code
        status, error = "failed", f"{type(exc).__name__}: {exc}"
        log.error("run failed: %s", error)
    timer.timings["total_s"] = time.perf_counter() - t0
    manifest = RunManifest(
        name=cfg.name, status=status, config=cfg.raw,
        seeds={"run": cfg.seed, "source": cfg.raw["source"]["seed"]},
        artifacts=list(writer.artifacts), timings=timer.timings,
        environment=_environment(threads), error=error)
    writer.write_json("manifest.json", manifest.to_dict(), "manifest")
    return (EXIT_OK if status == "complete" else EXIT_RUNTIME), manifest


# ------------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qcpr", description="Quantum-correlated phase retrieval simulations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a config file or built-in scenario")
    run.add_argument("config", help="path to a JSON config or a built-in scenario name")
    run.add_argument("--output-dir", type=Path, help="directory for all artifacts")
    run.add_argument("--seed", type=int, help="override run.seed (and the source seed if unset)")
    run.add_argument("--threads", type=int, default=1, help="FFT worker threads (default 1)")
    run.add_argument("--quiet", action="store_true", help="only report warnings and errors")

    sub.add_parser("list", help="list built-in scenarios")
    show = sub.add_parser("show", help="print a built-in scenario config")
    show.add_argument("name")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        for name in builtin_names():
            raw = builtin_raw(name)
            print(f"{name:22s} {raw.get('description', '')}")
        return EXIT_OK
    if args.command == "show":
        try:
            print(json.dumps(builtin_raw(args.name), indent=2))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK

    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = resolve(args.config, args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("running %s (%s), seed %d", cfg.name, cfg.kind, cfg.seed)
    code, manifest = run_scenario(cfg, args.output_dir, args.threads)
    if code == EXIT_OK:
        log.info("done in %.1f s; %d artifacts", manifest.timings["total_s"],
                 len(manifest.artifacts))
    else:
        print(f"error: {manifest.error}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
