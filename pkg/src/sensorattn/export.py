"""Writers for attention maps and prediction dumps."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .head import Predictions, format_predictions
from .tensor import Tensor, write_tsr1

FORMATS = ("pgm", "csv", "tsr1")
FLAT_GRAY = 128


def _as_2d(t: Tensor) -> np.ndarray:
    data = t.data
    if data.ndim == 0:
        return data.reshape(1, 1)
    if data.ndim == 1:
        return data.reshape(1, -1)
    return data.reshape(-1, data.shape[-1])


def to_gray(t: Tensor) -> np.ndarray:
    """Min-max scale to 0..255; a map with no range is flat mid-gray."""
    data = _as_2d(t)
    lo, hi = float(data.min()), float(data.max())
    if hi <= lo:
        return np.full(data.shape, FLAT_GRAY, dtype=np.uint8)
    return np.rint((data - lo) / (hi - lo) * 255.0).astype(np.uint8)


def pgm_bytes(t: Tensor) -> bytes:
    gray = to_gray(t)
    h, w = gray.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + gray.tobytes()


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def csv_text(t: Tensor) -> str:
    rows = _as_2d(t)
    return "".join(",".join(np.format_float_positional(v, trim="-") for v in row) + "\n" for row in rows)


def export_attention(t: Tensor, path, fmt: str | None = None) -> Path:
    """Write a map as PGM, CSV or TSR1; the format defaults to the file suffix.

    Maps of rank above two are flattened to rows over the last axis.
    """
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt not in FORMATS:
        raise ValueError(f"unknown attention export format {fmt!r}; expected one of {FORMATS}")
    if fmt == "pgm":
        path.write_bytes(pgm_bytes(t))
    elif fmt == "csv":
        path.write_text(csv_text(t))
    else:
        write_tsr1(t, path)
    return path


def write_predictions(preds: Predictions, path) -> Path:
    path = Path(path)
    path.write_text(format_predictions(preds))
    return path


def write_dumps(dumps: dict[str, Tensor], out_dir, formats=FORMATS) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [export_attention(t, out_dir / f"{name}.{fmt}", fmt) for name, t in sorted(dumps.items()) for fmt in formats]
