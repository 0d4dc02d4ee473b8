"""Deterministic JSON and RFC-4180 CSV artifacts.

Floats are written with 17 significant digits so identical inputs give
byte-identical files; non-finite floats are written as null. Every JSON
artifact carries a "schema" field of the form "delayembed.<kind>/<version>".
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .orbit import PeriodicOrbit
from .signal import PeriodicSignal, from_samples

__all__ = [
    "SCHEMA_VERSION",
    "schema_name",
    "dumps",
    "write_json",
    "read_json",
    "load_signal",
    "save_signal",
    "load_orbit",
    "save_orbit",
    "read_samples_csv",
    "read_points_csv",
    "write_csv",
]

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    pass


def schema_name(kind):
    return f"delayembed.{kind}/{SCHEMA_VERSION}"


def _fmt_float(x):
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if s in ("-0", "0"):
        return "0.0"
    if not any(c in s for c in ".eEn"):
        s += ".0"
    return s


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, complex):
        return _encode([obj.real, obj.imag], indent, level)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        parts = [_encode(v, indent, level + 1) for v in obj]
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(parts) + "]"
        return "[\n" + ",\n".join(pad + p for p in parts) + "\n" + end + "]"
    if hasattr(obj, "to_dict"):
        return _encode(obj.to_dict(), indent, level)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent=2):
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj, kind=None):
    """Write `obj` as JSON; with `kind`, a leading "schema" field is added."""
    if kind is not None:
        obj = {"schema": schema_name(kind), **obj}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def read_json(path, kind=None):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if kind is not None and "schema" in data:
        name, _, version = str(data["schema"]).partition("/")
        if name != f"delayembed.{kind}":
            raise SchemaError(f"{path}: expected a {kind} file, found schema {data['schema']!r}")
        if version and int(version) > SCHEMA_VERSION:
            raise SchemaError(f"{path}: schema version {version} is newer than supported {SCHEMA_VERSION}")
    return data


def load_signal(path):
    return PeriodicSignal.from_dict(read_json(path, "signal"))


def save_signal(path, signal):
    return write_json(path, signal.to_dict(), "signal")


def orbit_to_dict(orbit):
    comps = []
    for c in orbit.components:
        comps.append(c.to_dict() if c.pieces else [[float(a), float(b)] for a, b in zip(c.cos, c.sin)])
    return {"period": float(orbit.period), "dim": orbit.dim, "components": comps}


def load_orbit(path):
    return PeriodicOrbit.from_dict(read_json(path, "orbit"))


def save_orbit(path, orbit):
    return write_json(path, orbit_to_dict(orbit), "orbit")


def read_samples_csv(path):
    """Values from a single-column CSV ("value" or "t,value" header, or bare numbers).

    Returns (values, spacing) where spacing is the uniform time step when a
    t column is present, else None.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ValueError(f"{path}: no samples")
    try:
        float(rows[0][-1])
    except ValueError:
        header = [h.strip().lower() for h in rows[0]]
        rows = rows[1:]
        if header not in (["t", "value"], ["value"]):
            raise ValueError(f"{path}: header must be 't,value' or 'value', got {','.join(header)}")
    data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    if data.ndim != 2 or data.shape[1] not in (1, 2):
        raise ValueError(f"{path}: expected one or two columns")
    values = data[:, -1]
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{path}: non-finite sample values")
    spacing = None
    if data.shape[1] == 2:
        dt = np.diff(data[:, 0])
        if dt.size and (np.any(dt <= 0) or np.ptp(dt) > 1e-9 * max(abs(dt[0]), 1e-300)):
            raise ValueError(f"{path}: sample times must be uniformly spaced")
        spacing = float(dt[0]) if dt.size else None
    return values, spacing


def signal_from_csv(path, period=None, n_modes=None):
    values, spacing = read_samples_csv(path)
    if period is None:
        if spacing is None:
            raise ValueError("period is required for value-only samples")
        period = spacing * values.size
    n_modes = n_modes if n_modes is not None else (values.size - 1) // 2
    return from_samples(values, period, n_modes)


def read_points_csv(path, dim=None):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]
    X = np.array([[float(c) for c in r] for r in rows], dtype=float)
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"{path}: expected {dim} columns, got {X.shape[1]}")
    return X


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt_float(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path
