"""Plain-file outputs: BPG1 grid files, 16-bit PGM previews and CSV curves.

BPG1 layout (little endian): magic ``b"BPG1"``, u32 ``n1``, u32 ``n2``,
f64 ``dx1``, ``dx2``, ``x1_0``, ``x2_0``, u8 dtype (0 = float64,
1 = complex128), then the ``n1 x n2`` payload in row-major order.
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .fields import JPD2, ComplexField2D, Grid

_MAGIC = b"BPG1"
_HEADER = struct.Struct("<4sII4dB")
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


class GridFormatError(ValueError):
    """A BPG1 file is malformed."""


def write_grid(obj, path) -> None:
    """Write a :class:`JPD2`, :class:`ComplexField2D` or ``(Grid, array)`` pair."""
    if isinstance(obj, (JPD2, ComplexField2D)):
        grid, values = obj.grid, obj.values
    else:
        grid, values = obj
    values = np.asarray(values)
    code = 1 if np.iscomplexobj(values) else 0
    if values.shape != grid.shape:
        raise ValueError(f"values shape {values.shape} does not match grid {grid.shape}")
    header = _HEADER.pack(_MAGIC, grid.n1, grid.n2, grid.dx1, grid.dx2, grid.x1_0, grid.x2_0, code)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(values, dtype=_DTYPES[code]).tobytes())


def read_grid(path):
    """Read a BPG1 file as :class:`JPD2` (real) or :class:`ComplexField2D`."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise GridFormatError(f"{path}: truncated header ({len(data)} of {_HEADER.size} bytes)")
    magic, n1, n2, dx1, dx2, x10, x20, code = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise GridFormatError(f"{path}: bad magic {magic!r} at byte 0")
    if code not in _DTYPES:
        raise GridFormatError(f"{path}: unknown dtype code {code} at byte {_HEADER.size - 1}")
    dt = _DTYPES[code]
    expected = _HEADER.size + n1 * n2 * dt.itemsize
    if len(data) != expected:
        raise GridFormatError(f"{path}: payload ends at byte {len(data)}, expected {expected}")
    values = np.frombuffer(data, dtype=dt, offset=_HEADER.size).reshape(n1, n2).astype(dt.newbyteorder("="))
    grid = Grid(n1, n2, dx1, dx2, x10, x20)
    return ComplexField2D(grid, values) if code else JPD2(grid, values)


def write_pgm(values, path) -> None:
    """16-bit greyscale preview, linearly mapped from the array's min..max."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError("PGM output needs a 2D array")
    lo, hi = float(v.min()), float(v.max())
    scaled = np.zeros(v.shape) if hi == lo else (v - lo) / (hi - lo)
    img = np.round(scaled * 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{v.shape[1]} {v.shape[0]}\n65535\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5" or len(parts) < 4:
        raise ValueError(f"{path}: not a binary PGM")
    w, h = (int(t) for t in parts[1].split())
    return np.frombuffer(parts[3], dtype=">u2").reshape(h, w).astype(np.uint16)


def write_csv(path, header, rows, comments=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def read_csv(path):
    """``(header, rows)`` skipping ``#`` comment lines; rows are lists of strings."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def write_report(path, items, comments=()) -> None:
    """``key=value`` text file."""
    with open(path, "w") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        for k, v in items:
            fh.write(f"{k}={v}\n")


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line and not line.startswith("#"):
            k, _, v = line.partition("=")
            out[k] = v
    return out
