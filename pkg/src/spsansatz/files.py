"""Atomic file output, CSV with comment preambles, and JSON documents."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_csv(header, rows, preamble=None) -> str:
    """RFC-4180 style CSV; ``preamble`` lines are emitted as ``# ...`` comments."""
    buf = io.StringIO()
    for line in preamble or ():
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        values = [row[h] for h in header] if isinstance(row, dict) else list(row)
        writer.writerow([_cell(v) for v in values])
    return buf.getvalue()


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_csv(path, header, rows, preamble=None) -> None:
    atomic_write_text(path, format_csv(header, rows, preamble))


def read_csv(path) -> list[dict]:
    """Rows of a CSV written by :func:`write_csv`, as string-valued dicts."""
    lines = [ln for ln in Path(path).read_text().splitlines(keepends=True) if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_json(path, data) -> None:
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=False, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
