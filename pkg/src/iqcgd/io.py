"""Serialisation with 17 significant digits and the published JSON schemas."""

from __future__ import annotations

import csv
import enum
import json
import math
from importlib import resources
from typing import IO, Any, Iterable, Sequence

import numpy as np

from .iqc import Trajectory
from .linalg import row_norms

SCHEMA_VERSION = "v1"
SCHEMA_NAMES = ("certify", "simulate", "verify")


def fmt17(x: float) -> str:
    return format(float(x), ".17g")


def _emit(obj: Any, out: list[str], indent: int | None, level: int) -> None:
    if obj is None or (isinstance(obj, float) and not math.isfinite(obj)):
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, enum.Enum):
        _emit(obj.value, out, indent, level)
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        if not math.isfinite(float(obj)):
            out.append("null")
        else:
            out.append(fmt17(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        items = list(obj.items())
        if not items:
            out.append("{}")
            return
        pad, inner = _pads(indent, level)
        out.append("{")
        for i, (k, v) in enumerate(items):
            out.append(inner + json.dumps(str(k)) + ": ")
            _emit(v, out, indent, level + 1)
            if i < len(items) - 1:
                out.append(",")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            out.append("[]")
            return
        pad, inner = _pads(indent, level)
        out.append("[")
        for i, v in enumerate(seq):
            out.append(inner)
            _emit(v, out, indent, level + 1)
            if i < len(seq) - 1:
                out.append(",")
        out.append(pad + "]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def _pads(indent, level):
    if indent is None:
        return "", ""
    return "\n" + " " * (indent * level), "\n" + " " * (indent * (level + 1))


def dumps17(obj: Any, indent: int | None = 2) -> str:
    """JSON with every float written to 17 significant digits; non-finite floats become ``null``."""
    out: list[str] = []
    _emit(obj, out, indent, 0)
    return "".join(out)


def load_schema(name: str) -> dict:
    if name not in SCHEMA_NAMES:
        raise KeyError(name)
    text = resources.files("iqcgd.schema").joinpath(f"{name}.{SCHEMA_VERSION}.json").read_text()
    return json.loads(text)


def write_csv(fh: IO[str], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(c) for c in row])


def _cell(c: Any) -> str:
    if c is None:
        return ""
    if isinstance(c, enum.Enum):
        return str(c.value)
    if isinstance(c, (bool, np.bool_)):
        return "true" if c else "false"
    if isinstance(c, (float, np.floating)):
        return fmt17(c) if math.isfinite(float(c)) else ("inf" if c > 0 else "-inf" if c < 0 else "nan")
    return str(c)


def trajectory_rows(traj: Trajectory):
    d = traj.dim
    header = ["k"] + [f"x_{i}" for i in range(d)] + ["dist", "grad_norm", "noise_norm"] + [f"v_{i}" for i in range(d)]
    dist = traj.distance
    gn = row_norms(traj.u)
    en = row_norms(traj.e) if traj.e is not None else np.zeros(len(traj))
    v = traj.v if traj.v is not None else np.zeros_like(traj.x)
    rows = ([k, *traj.x[k], dist[k], gn[k], en[k], *v[k]] for k in range(len(traj)))
    return header, rows


def write_trajectory_csv(fh: IO[str], traj: Trajectory) -> None:
    """Columns ``k, x_i..., dist, grad_norm, noise_norm, v_i...``."""
    header, rows = trajectory_rows(traj)
    write_csv(fh, header, rows)
