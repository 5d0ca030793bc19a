"""Artifact formats: binary field dumps, trajectory CSV, JSON reports.

Field dump layout (little endian throughout)::

    magic   8 bytes  b"MCFIELD1"
    flags   uint32   bit 0 set for complex data
    ndim    uint32
    dims    ndim x uint64
    spacing ndim x float64
    data    float64 values in C order (real and imaginary parts interleaved
            when complex)
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "MAGIC",
    "write_field",
    "read_field",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_points_csv",
    "write_json",
    "to_jsonable",
]

MAGIC = b"MCFIELD1"


def write_field(path, values: np.ndarray, spacing: Sequence[float]) -> None:
    values = np.asarray(values)
    spacing = np.asarray(spacing, "<f8")
    if spacing.size != values.ndim:
        raise ValueError("one spacing per axis")
    is_complex = np.iscomplexobj(values)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", int(is_complex), values.ndim))
        fh.write(np.asarray(values.shape, "<u8").tobytes())
        fh.write(spacing.tobytes())
        data = values.astype("<c16") if is_complex else values.astype("<f8")
        fh.write(np.ascontiguousarray(data).tobytes())


def read_field(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(values, spacing)``."""
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError("not a field dump")
        flags, ndim = struct.unpack("<II", fh.read(8))
        dims = tuple(int(d) for d in np.frombuffer(fh.read(8 * ndim), "<u8"))
        spacing = np.frombuffer(fh.read(8 * ndim), "<f8").copy()
        dt = "<c16" if flags & 1 else "<f8"
        values = np.frombuffer(fh.read(), dt).reshape(dims).copy()
    return values, spacing


def write_trajectory_csv(path, trajectory) -> None:
    """Columns ``s, x0..x{n-1}, xi0..xi{n-1}`` at the accepted steps."""
    s, X, XI = trajectory.s, trajectory.x, trajectory.xi
    n = X.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s"] + [f"x{i}" for i in range(n)] + [f"xi{i}" for i in range(n)])
        for row in np.column_stack([s, X, XI]):
            w.writerow([repr(float(v)) for v in row])


def read_trajectory_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def write_points_csv(path, points: np.ndarray, header: Sequence[str] = ("t", "x1", "x2")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(header))
        for row in np.atleast_2d(points):
            w.writerow([repr(float(v)) for v in row])


def to_jsonable(obj):
    """Recursively convert numpy scalars and arrays for :mod:`json`."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n")
