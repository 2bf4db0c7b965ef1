"""Shared JSON/CSV plumbing: matrix parsing with validation, float formatting."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FileFormatError

# 17 significant digits round-trips any IEEE double exactly.
FLOAT_FMT = "%.17g"


def fmt(x: float) -> str:
    return FLOAT_FMT % float(x)


def load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise FileFormatError(f"{path}: top-level JSON value must be an object")
    return doc


def dump_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def as_matrix(doc: dict, key: str, *, context: str = "") -> np.ndarray:
    """Read doc[key] as a 2-D array of finite doubles."""
    where = f"{context}: " if context else ""
    if key not in doc:
        raise FileFormatError(f"{where}missing required field {key!r}")
    try:
        M = np.asarray(doc[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"{where}field {key!r} is not numeric: {exc}") from exc
    if M.ndim != 2:
        raise FileFormatError(f"{where}field {key!r} must be a matrix "
                              f"(list of rows), got ndim={M.ndim}")
    if not np.all(np.isfinite(M)):
        raise FileFormatError(f"{where}field {key!r} contains non-finite entries")
    return M


def matrix_to_lists(M: np.ndarray) -> list:
    return [[float(x) for x in row] for row in np.atleast_2d(M)]


def frozen(M) -> np.ndarray:
    """Return a read-only copy of an array (shared values are immutable)."""
    M = np.array(M)
    M.setflags(write=False)
    return M
