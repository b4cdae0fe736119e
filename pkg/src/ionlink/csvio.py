"""Delimited output with '#'-prefixed metadata header lines.

Every file written here is UTF-8, comma separated, and begins with
``# key=value`` lines so a run can be repeated bit-identically.  Floats are
written with ``repr`` (shortest round-trip form) to keep output stable.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from . import __version__


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return repr(value)
    if value is None:
        return ""
    if hasattr(value, "item"):  # numpy scalar
        return format_value(value.item())
    return str(value)


def metadata_lines(meta: dict) -> list[str]:
    lines = [f"# tool=ionlink {__version__}"]
    for key in sorted(meta):
        val = meta[key]
        if isinstance(val, (dict, list, tuple)):
            val = json.dumps(val, sort_keys=True, default=format_value)
        else:
            val = format_value(val)
        lines.append(f"# {key}={val}")
    return lines


def render_csv(columns, rows, meta=None) -> str:
    buf = io.StringIO()
    for line in metadata_lines(meta or {}):
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if isinstance(row, dict):
            row = [row.get(c) for c in columns]
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows, meta=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(columns, rows, meta), encoding="utf-8")
    return path


def read_csv(path):
    """Return ``(meta, rows)`` where rows are dicts of strings."""
    meta = {}
    body = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key] = val
        else:
            body.append(line)
    return meta, list(csv.DictReader(body))
