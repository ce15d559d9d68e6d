"""Plain-text output: CSV tables and the JSON run manifest."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def format_number(value) -> str:
    """Shortest decimal that parses back to the same double; ``nan``/``None`` become empty."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return ""
    text = repr(v)
    if text.endswith(".0"):
        text = text[:-2]
    return text


def write_table(path, header, rows) -> None:
    """Write comma-separated rows with a header line and LF line endings."""
    header = list(header)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            row = list(row)
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
            writer.writerow([format_number(v) for v in row])


def read_table(path):
    """Read a table written by :func:`write_table`; empty fields become ``nan``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) if v != "" else math.nan for v in row] for row in reader]
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def write_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
