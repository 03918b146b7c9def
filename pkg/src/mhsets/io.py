"""Reproducible serialization: fixed-format JSON, CSV tables and grid fields.

Every float is written with 17 significant digits so a report round-trips
bit for bit and two runs with the same inputs produce identical bytes.
Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .fields import Grid, ScalarField


def fmt_float(v):
    v = float(v)
    if math.isnan(v):
        return '"nan"'
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    return format(v, ".17g")


def to_plain(obj):
    """Numpy scalars and arrays to Python objects; tuples to lists."""
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    return obj


def _encode(obj, indent, level, out):
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        out.append(json.dumps(obj))
    elif isinstance(obj, float):
        out.append(fmt_float(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for i, k in enumerate(sorted(obj)):
            out.append(("," if i else "") + pad + json.dumps(k) + ": ")
            _encode(obj[k], indent, level + 1, out)
        out.append(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            out.append("[" + ", ".join(fmt_float(v) if isinstance(v, float) else str(v) for v in obj) + "]")
            return
        out.append("[")
        for i, v in enumerate(obj):
            out.append(("," if i else "") + pad)
            _encode(v, indent, level + 1, out)
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=1) -> str:
    """Deterministic JSON text: sorted keys, ``%.17g`` floats, trailing newline."""
    out = []
    _encode(to_plain(obj), indent, 0, out)
    return "".join(out) + "\n"


def loads(text):
    return _restore(json.loads(text))


def _restore(obj):
    if isinstance(obj, str) and obj in ("nan", "inf", "-inf"):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _restore(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_restore(v) for v in obj]
    return obj


def csv_table(header, rows) -> str:
    """Plain CSV with ``%.17g`` numbers and empty cells for ``None``."""
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, (bool, np.bool_)):
            return "true" if v else "false"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return fmt_float(v).strip('"')
        return str(v)

    lines = [",".join(header)] + [",".join(cell(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def flatten(obj, prefix=""):
    """``{"a": {"b": 1}}`` to ``[("a.b", 1)]``; lists of numbers stay whole."""
    items = []
    if isinstance(obj, dict):
        for k in sorted(obj):
            items += flatten(obj[k], f"{prefix}{k}.")
    elif isinstance(obj, list) and obj and not all(isinstance(v, (int, float)) for v in obj):
        for i, v in enumerate(obj):
            items += flatten(v, f"{prefix}{i}.")
    else:
        val = " ".join(fmt_float(v) for v in obj) if isinstance(obj, list) else obj
        items.append((prefix[:-1], val))
    return items


def save_field(path, phi: ScalarField):
    """Grid header plus node values in a compressed ``.npz`` archive."""
    path = Path(path)
    np.savez_compressed(path, values=phi.values, lower=np.array(phi.grid.lower), upper=np.array(phi.grid.upper),
                        shape=np.array(phi.grid.shape), policy=np.array(phi.policy))
    return path


def load_field(path) -> ScalarField:
    with np.load(path) as z:
        grid = Grid(tuple(z["lower"]), tuple(z["upper"]), tuple(int(n) for n in z["shape"]))
        return ScalarField(grid, z["values"], str(z["policy"]))
