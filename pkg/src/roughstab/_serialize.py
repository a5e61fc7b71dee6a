"""Canonical, byte-stable serialization helpers.

Floats are rendered with 17 significant digits (round-trip exact for
IEEE doubles), JSON objects with sorted keys, and rows with fixed field
order, so identical inputs reproduce identical files byte for byte.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np


def fmt_float(x: float) -> str:
    return "%.17g" % float(x)


def _json_chunks(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool) or isinstance(obj, np.bool_):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isnan(x):
            out.append('"nan"')
        elif np.isinf(x):
            out.append('"inf"' if x > 0 else '"-inf"')
        else:
            out.append(fmt_float(x))
    elif isinstance(obj, str):
        out.append('"' + obj.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"')
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj, key=str)):
            if i:
                out.append(",")
            _json_chunks(str(key), out)
            out.append(":")
            _json_chunks(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        for i, item in enumerate(seq):
            if i:
                out.append(",")
            _json_chunks(item, out)
        out.append("]")
    else:
        raise TypeError(f"unserializable type {type(obj).__name__}")


def dumps_json(obj) -> str:
    out: list = []
    _json_chunks(obj, out)
    return "".join(out) + "\n"


def write_json(path: Path, obj) -> str:
    text = dumps_json(obj)
    Path(path).write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> str:
    """Columns of equal length, floats at 17 significant digits."""
    cols = [np.asarray(c) for c in columns]
    lines = [",".join(header)]
    for i in range(cols[0].shape[0]):
        lines.append(",".join(fmt_float(c[i]) for c in cols))
    text = "\n".join(lines) + "\n"
    Path(path).write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return header, data


def config_hash(obj) -> str:
    return hashlib.sha256(dumps_json(obj).encode()).hexdigest()[:16]
