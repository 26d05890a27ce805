"""FEATMAT1 writer.

Layout: 8-byte magic ``FEATMAT1``, two little-endian u32 (rows, cols), then
rows*cols IEEE-754 float32 little-endian values in row-major order.  The
sidecar ``<path>.names`` lists one class name per line after an optional
``# kind: <kind>`` comment.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FEATMAT1"


def write_featmat(rows: np.ndarray, names: list[str], path, kind: str = "hoi") -> None:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {rows.shape}")
    if rows.shape[0] != len(names):
        raise ValueError(f"{rows.shape[0]} rows for {len(names)} names")
    if not np.all(np.isfinite(rows)):
        raise ValueError("matrix contains non-finite values")
    path = Path(path)
    payload = rows.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", *payload.shape))
        fh.write(payload.tobytes())
    sidecar = Path(str(path) + ".names")
    sidecar.write_text("\n".join([f"# kind: {kind}", *names]) + "\n", encoding="utf-8")
