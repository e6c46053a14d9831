"""Snapshot, CSV and JSON output.

Snapshot layout (little-endian)::

    b"BQS1"  u32 version=1  u8 n_dims  u8 components  u8 side  u8 pad
    u64 points[n_dims]  f64 half_width[n_dims]  f64 time
    complex samples as interleaved f64 (re, im), component-major, row-major

``side`` is 0 for physical and 1 for spectral values.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .grid import PHYSICAL, SPECTRAL, Field, SpectralGrid

MAGIC = b"BQS1"
VERSION = 1

CSV_COLUMNS = ("t", "norm_u_X1", "norm_u_Xp", "norm_u_Xinf", "norm_u_Ysp", "norm_ut_Xp",
               "norm_ut_Xinf", "norm_ut_Ysp", "window_index", "picard_iters",
               "contraction_estimate")

_SIDES = {PHYSICAL: 0, SPECTRAL: 1}


class SnapshotError(ValueError):
    pass


def encode_snapshot(field: Field, time: float = 0.0) -> bytes:
    grid = field.grid
    head = MAGIC + struct.pack("<IBBBB", VERSION, grid.n_dims, field.components,
                               _SIDES[field.side], 0)
    head += struct.pack(f"<{grid.n_dims}Q", *grid.points)
    head += struct.pack(f"<{grid.n_dims}d", *grid.half_width)
    head += struct.pack("<d", float(time))
    body = np.ascontiguousarray(field.values, dtype="<c16").tobytes()
    return head + body


def decode_snapshot(data: bytes) -> tuple[Field, float]:
    if data[:4] != MAGIC:
        raise SnapshotError("not a BQS1 snapshot")
    version, n, comps, side, _ = struct.unpack_from("<IBBBB", data, 4)
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    if side not in (0, 1):
        raise SnapshotError(f"bad side byte {side}")
    off = 12
    points = struct.unpack_from(f"<{n}Q", data, off)
    off += 8 * n
    half_width = struct.unpack_from(f"<{n}d", data, off)
    off += 8 * n
    (time,) = struct.unpack_from("<d", data, off)
    off += 8
    grid = SpectralGrid(n, tuple(int(x) for x in points), tuple(half_width))
    count = comps * grid.size
    if len(data) - off != 16 * count:
        raise SnapshotError(f"expected {16 * count} sample bytes, found {len(data) - off}")
    values = np.frombuffer(data, dtype="<c16", count=count, offset=off)
    values = values.astype(complex).reshape((comps,) + grid.shape)
    return Field(grid, values, PHYSICAL if side == 0 else SPECTRAL), time


def write_snapshot(path, field: Field, time: float = 0.0) -> Path:
    path = Path(path)
    path.write_bytes(encode_snapshot(field, time))
    return path


def read_snapshot(path) -> tuple[Field, float]:
    return decode_snapshot(Path(path).read_bytes())


def csv_rows(report) -> list[list]:
    """Rows of the norm trace for a :class:`ContinuationReport`."""
    tr = report.trace
    n = tr.norms
    rows = []
    for k, t in enumerate(tr.times):
        rows.append([t, n["u_X1"][k], n["u_Xp"][k], n["u_Xinf"][k], n["u_Ysp"][k],
                     n["ut_Xp"][k], n["ut_Xinf"][k], n["ut_Ysp"][k],
                     int(report.window_index[k]), int(report.picard_iters[k]),
                     report.contraction[k]])
    return rows


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_csv(path, report) -> Path:
    path = Path(path)
    lines = [",".join(CSV_COLUMNS)]
    lines += [",".join(_fmt(x) for x in row) for row in csv_rows(report)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    """Columns of a norm-trace CSV as float arrays."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, j] for j, name in enumerate(CSV_COLUMNS)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path
