"""CSV/JSON writers that embed run metadata.

CSV files open with ``# key: value`` comment lines (tool version, resolved
configuration, seed). Nothing time-dependent is written, so identical
runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from . import __version__

__all__ = ["jsonable", "metadata", "write_csv", "write_json", "format_value"]


def jsonable(obj: Any) -> Any:
    """Convert numpy scalars, enums and non-finite floats to plain JSON values."""
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def metadata(config: Mapping, seed: int | None, **extra) -> dict:
    meta = {"tool": "grmac", "version": __version__, "seed": seed, "config": jsonable(dict(config))}
    meta.update(jsonable(extra))
    return meta


def format_value(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return format(f, ".10g")
    if v is None:
        return ""
    return str(v)


def _open(path: str | Path | None):
    if path is None or str(path) == "-":
        return sys.stdout, False
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return open(p, "w", newline="", encoding="utf-8"), True


def write_csv(rows: Iterable[Mapping], path: str | Path | None, meta: Mapping, columns=None) -> None:
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buf = io.StringIO()
    for k, v in meta.items():
        text = json.dumps(jsonable(v), sort_keys=True) if isinstance(v, (Mapping, list)) else format_value(v)
        buf.write(f"# {k}: {text}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r.get(c)) for c in columns])
    fh, close = _open(path)
    try:
        fh.write(buf.getvalue())
    finally:
        if close:
            fh.close()


def write_json(obj: Any, path: str | Path | None, meta: Mapping) -> None:
    text = json.dumps({"meta": jsonable(meta), "data": jsonable(obj)}, indent=2, sort_keys=True) + "\n"
    fh, close = _open(path)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()
