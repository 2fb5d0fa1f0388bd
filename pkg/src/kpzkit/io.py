"""Atomic CSV/JSON writers and deterministic config hashing."""
from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from typing import Mapping, Sequence

import numpy as np

__all__ = ["atomic_write_text", "config_hash", "write_csv", "write_json", "read_csv", "to_jsonable"]


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the target directory and rename, so a
    reader never sees a partial file."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_jsonable(obj):
    """Convert numpy scalars/arrays and dataclass-like containers to plain JSON types."""
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def config_hash(config: Mapping) -> str:
    """First 16 hex digits of the SHA-256 of the canonical JSON encoding."""
    blob = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def write_csv(path, columns: Mapping[str, Sequence], comments: Mapping | None = None) -> None:
    """CSV with '# key=value' comment lines, then a header row, then data.

    Column names may carry units in brackets, e.g. ``x[lattice]``.
    Floats are written with repr so the output round-trips exactly.
    """
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns must have equal length")
    lines = []
    for k, v in (comments or {}).items():
        lines.append(f"# {k}={v}")
    lines.append(",".join(names))
    for i in range(n):
        lines.append(",".join(_fmt(c[i]) for c in cols))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _fmt(v):
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    return repr(float(v))


def read_csv(path):
    """Inverse of :func:`write_csv`: returns (columns dict of float arrays, comments dict)."""
    comments, rows, header = {}, [], None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                comments[k.strip()] = v.strip()
            elif header is None:
                header = line.split(",")
            else:
                rows.append([float(x) for x in line.split(",")])
    if header is None:
        raise ValueError(f"{path}: no header row")
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return {h: data[:, i] for i, h in enumerate(header)}, comments


def write_json(path, payload: Mapping) -> None:
    atomic_write_text(path, json.dumps(to_jsonable(payload), indent=1, sort_keys=True) + "\n")
