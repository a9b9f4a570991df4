"""Atomic CSV/JSON output with round-trippable floats."""
from __future__ import annotations

import enum
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def write_atomic(path, text: str) -> Path:
    """Write via a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def csv_text(columns: dict) -> str:
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    size = arrays[0].shape[0] if arrays else 0
    if any(a.shape != (size,) for a in arrays):
        raise ValueError("CSV columns must be 1-D arrays of equal length")
    lines = [",".join(names)]
    for row in zip(*arrays):
        lines.append(",".join(str(int(v)) if np.issubdtype(type(v), np.integer) else _fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, columns: dict) -> Path:
    return write_atomic(path, csv_text(columns))


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become ``null``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "as_dict"):
        return to_jsonable(obj.as_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def json_text(obj) -> str:
    # Python's float repr is the shortest string that round-trips
    return json.dumps(to_jsonable(obj), indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    return write_atomic(path, json_text(obj))
