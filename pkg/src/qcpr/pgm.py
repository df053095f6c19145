"""Binary PGM (P5) reading and writing, 8- or 16-bit grayscale."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

_HEADER = re.compile(rb"P5(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    match = _HEADER.match(data)
    if match is None:
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(g) for g in match.groups())
    if not 0 < maxval < 65536:
        raise ValueError(f"{path}: invalid maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    body = data[match.end():]
    expected = width * height * dtype.itemsize
    if len(body) < expected:
        raise ValueError(f"{path}: truncated pixel data ({len(body)} < {expected} bytes)")
    return np.frombuffer(body[:expected], dtype=dtype).reshape(height, width).astype(np.uint16)


def to_pgm_bytes(values: np.ndarray) -> bytes:
    """16-bit quick-look encoding, min-max scaled to the full range."""
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    scaled = np.zeros(values.shape) if hi <= lo else (values - lo) / (hi - lo)
    pixels = np.round(scaled * 65535).astype(">u2")
    height, width = values.shape
    return f"P5\n{width} {height}\n65535\n".encode() + pixels.tobytes()


def write_pgm(path, values: np.ndarray) -> None:
    Path(path).write_bytes(to_pgm_bytes(values))
