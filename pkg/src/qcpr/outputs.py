"""Artifact writers: CSV tables, raw float32 maps with JSON sidecars, PGM previews.

Every file is written to a temporary name and moved into place, so a
reader never sees a half-written artifact. :class:`ArtifactWriter` keeps the
list of files and their SHA-256 digests for the run manifest.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from .pgm import to_pgm_bytes


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp-{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "nan" if math.isnan(value) else repr(value)
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def csv_bytes(rows: list[dict], header: list[str] | None = None) -> bytes:
    """RFC 4180 table (CRLF line ends, mandatory header)."""
    if header is None:
        if not rows:
            raise ValueError("cannot infer a CSV header from zero rows")
        header = list(rows[0])
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(row.get(col, "")) for col in header])
    return buf.getvalue().encode("utf-8")


def raw_map_bytes(values) -> bytes:
    return np.ascontiguousarray(values, dtype="<f4").tobytes(order="C")


def read_raw_map(path) -> np.ndarray:
    """Load a raw float32 map using its JSON sidecar for the shape."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    data = np.fromfile(path, dtype="<f4")
    return data.reshape(meta["shape"])


class ArtifactWriter:
    """Writes files under ``root`` and records them for the manifest."""

    def __init__(self, root):
        self.root = Path(root).resolve()
        self.artifacts: list[dict] = []

    def _target(self, relpath: str) -> Path:
        target = (self.root / relpath).resolve()
        if self.root not in target.parents:
            raise ValueError(f"artifact path {relpath!r} leaves the output directory")
        return target

    def write_bytes(self, relpath: str, data: bytes, kind: str) -> Path:
        target = self._target(relpath)
        atomic_write(target, data)
        self.artifacts.append({"path": relpath, "kind": kind, "bytes": len(data),
                               "sha256": sha256_bytes(data)})
        return target

    def write_csv(self, relpath: str, rows: list[dict], header: list[str] | None = None):
        return self.write_bytes(relpath, csv_bytes(rows, header), "csv")

    def write_json(self, relpath: str, obj, kind: str = "json"):
        data = (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")
        return self.write_bytes(relpath, data, kind)

    def write_map(self, stem: str, values, pitch: float, units: str = "rad",
                  extra: dict | None = None, preview: bool = True) -> None:
        """``stem.f32`` + ``stem.json`` sidecar (+ ``stem.pgm`` quick look)."""
        values = np.asarray(values)
        raw = raw_map_bytes(values)
        self.write_bytes(f"{stem}.f32", raw, "raw-map")
        sidecar = {"shape": list(values.shape), "dtype": "float32", "byte_order": "little",
                   "order": "C", "pitch_m": float(pitch), "units": units,
                   "sha256": sha256_bytes(raw)}
        sidecar.update(extra or {})
        self.write_json(f"{stem}.json", sidecar, "sidecar")
        if preview:
            self.write_bytes(f"{stem}.pgm", to_pgm_bytes(values), "preview")
