"""Deterministic report writing: fixed float precision, atomic files."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

FLOAT_DECIMALS = 6


def round6(value: float) -> float:
    """Fixed 6-decimal rounding used in every report for byte stability."""
    return round(float(value), FLOAT_DECIMALS)


def fmt6(value: float) -> str:
    return f"{float(value):.{FLOAT_DECIMALS}f}"


def jsonify(obj):
    """Recursively convert report objects to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonify(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return round6(float(obj))
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return jsonify(obj.tolist())
    if isinstance(obj, Path):
        return str(obj)
    return obj


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write via a temp file + rename so readers never see partial output."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(obj, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(jsonify(obj), indent=2) + "\n")


def dump_csv(rows: list[list], header: list[str], path: str | Path) -> None:
    """Plain CSV with 6-decimal floats; values must not contain commas."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, (float, np.floating)):
                cells.append(fmt6(cell))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")
