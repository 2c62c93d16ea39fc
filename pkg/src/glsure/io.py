"""CSV and JSON readers/writers for problems, solutions and curves."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .blocks import BlockPartition


def read_matrix(path: str | Path) -> np.ndarray:
    """Read a row-major CSV of floats; a non-numeric first row is a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]
    return np.array([[float(c) for c in r] for r in rows], dtype=float)


def read_vector(path: str | Path) -> np.ndarray:
    """A vector stored as one column or one row of a CSV file."""
    m = read_matrix(path)
    if m.ndim == 2 and 1 not in m.shape:
        raise ValueError(f"{path}: expected a single row or column, got {m.shape}")
    return m.ravel()


def write_matrix(path: str | Path, a: np.ndarray) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(a.tolist())


def read_partition(source: str | Path) -> BlockPartition:
    """Partition from a JSON file path or an inline JSON array."""
    text = str(source)
    if not text.lstrip().startswith("["):
        text = Path(source).read_text()
    return BlockPartition.from_json(text)


def read_problem_descriptor(path: str | Path) -> dict:
    """``{lambda, partition, x_path, y_path}`` with paths resolved."""
    path = Path(path)
    desc = json.loads(path.read_text())
    missing = {"lambda", "partition", "x_path", "y_path"} - desc.keys()
    if missing:
        raise ValueError(f"{path}: missing keys {sorted(missing)}")
    for key in ("x_path", "y_path"):
        p = Path(desc[key])
        if not p.is_absolute():
            desc[key] = str(path.parent / p)
    part = desc["partition"]
    desc["partition"] = (BlockPartition(part) if isinstance(part, list)
                         else read_partition(path.parent / part))
    return desc


def _clean(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(path: str | Path | None, payload: dict) -> str:
    """Dump ``payload``; non-finite floats become ``null``."""
    text = json.dumps(_clean(payload), indent=2, allow_nan=False)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def write_curve_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
