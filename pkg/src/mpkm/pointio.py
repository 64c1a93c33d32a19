"""Dataset files: CSV points, the binary round-trip format, JSON reports.

CSV is one point per row, columns are coordinates, an optional non-numeric
header row is skipped; ids are assigned by row order. The binary format is
little-endian: magic "MPKM", u32 n, u32 d, then n*d float64 values. JSON
reports are emitted with sorted keys and 17-significant-digit floats so
identical runs produce identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .core import PointSet
from .errors import InputError

MAGIC = b"MPKM"


def read_points_csv(path) -> PointSet:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                if rows:
                    raise InputError(f"non-numeric row after data in {path}")
                continue  # header
    if not rows:
        raise InputError(f"no points in {path}")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise InputError(f"ragged rows in {path}")
    return PointSet(np.array(rows, dtype=np.float64))


def write_points_csv(ps: PointSet, path, header: bool = False):
    with open(path, "w") as fh:
        if header:
            fh.write(",".join(f"x{i}" for i in range(ps.dim)) + "\n")
        for row in ps.coords:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def write_points_binary(ps: PointSet, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", ps.n, ps.dim))
        fh.write(ps.coords.astype("<f8").tobytes())


def read_points_binary(path) -> PointSet:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise InputError(f"bad magic {magic!r} in {path}")
        n, d = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(8 * n * d), dtype="<f8")
        if data.size != n * d:
            raise InputError(f"truncated payload in {path}")
    return PointSet(data.reshape(n, d).astype(np.float64))


def _fmt_float(v: float) -> str:
    if v != v:
        return "NaN"
    if v == float("inf"):
        return "Infinity"
    if v == float("-inf"):
        return "-Infinity"
    return f"{v:.17g}"


def _emit(obj, out, indent):
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, key in enumerate(sorted(obj, key=str)):
            out.append(f'{pad}  {json.dumps(str(key))}: ')
            _emit(obj[key], out, indent + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj.tolist()) if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(seq):
            out.append(pad + "  ")
            _emit(item, out, indent + 1)
            out.append(",\n" if i < len(seq) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(obj, bool) or isinstance(obj, np.bool_):
        out.append("true" if obj else "false")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    else:
        out.append(json.dumps(str(obj)))


def dump_report(obj, path=None) -> str:
    """Deterministic JSON: sorted keys, 17-significant-digit floats."""
    out = []
    _emit(obj, out, 0)
    text = "".join(out)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
