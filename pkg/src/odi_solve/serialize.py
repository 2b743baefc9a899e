"""Deterministic JSON and CSV output.

Floats are written with 17 significant digits (exact round trip), keys are
sorted, non-finite values become the strings "inf", "-inf" and "nan".
"""

from __future__ import annotations

import csv
import io
import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

from .fem import _fmt

__all__ = ["dumps", "write_json", "write_text", "csv_text", "read_profile"]


def _scalar(x) -> str:
    if x is None:
        return "null"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return json.dumps(_fmt(x))
        return _fmt(x)
    if isinstance(x, Fraction):
        return json.dumps(str(x))
    return json.dumps(str(x), ensure_ascii=False)


def _dump(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sorted(((str(k), v) for k, v in obj.items()), key=lambda kv: kv[0])
        body = ",\n".join(f"{pad}{json.dumps(k, ensure_ascii=False)}: {_dump(v, indent, level + 1)}" for k, v in items)
        return "{\n" + body + "\n" + end + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_scalar(v) for v in obj) + "]"
        body = ",\n".join(pad + _dump(v, indent, level + 1) for v in obj)
        return "[\n" + body + "\n" + end + "]"
    return _scalar(obj)


def dumps(obj, indent: int = 2) -> str:
    return _dump(obj, indent, 0) + "\n"


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def write_json(path: Path, obj) -> Path:
    return write_text(path, dumps(obj))


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def read_profile(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and nodal values from a profile CSV (x, u, du_left)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["x", "u"]:
        raise ValueError(f"{path}: not a profile CSV")
    data = np.array([[float(r[0]), float(r[1])] for r in rows[1:]])
    return data[:, 0], data[:, 1]
