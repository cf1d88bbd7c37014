"""Deterministic report writers: CSV, canonical JSON, and PGM heatmaps.

Floats are rendered with repr (shortest round-trip form), so identical
values always produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays for json.dumps."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    payload = json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(payload, encoding="utf-8")


def _cell(value):
    if isinstance(value, (np.floating,)):
        value = float(value)
    elif isinstance(value, (np.integer,)):
        value = int(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_pgm(path, matrix) -> None:
    """Grayscale P5 heatmap; values are clipped to [0, 1] then scaled to 255."""
    m = np.asarray(matrix, dtype=np.float64)
    pixels = np.rint(np.clip(m, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
