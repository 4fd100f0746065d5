"""Minimal PDEPTH01 raster I/O, written against the documented byte layout.

Layout: bytes 0-7 ASCII magic ``PDEPTH01``; bytes 8-11 width (u32 LE);
bytes 12-15 height; byte 16 kind code (0 depth, 1 disparity, 2 mask-u8);
then the row-major payload (f32 LE for codes 0-1, one byte per pixel for
code 2). The harness consumes these files as-is, so this module is the
exporter's half of that contract.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PDEPTH01"
_HEADER = struct.Struct("<8sIIB")

DEPTH_CODE = 0
DISPARITY_CODE = 1

_KIND_CODES = {
    "metric-depth": DEPTH_CODE,
    "scale-depth": DEPTH_CODE,
    "affine-depth": DEPTH_CODE,
    "affine-disparity": DISPARITY_CODE,
}


def kind_code(output_kind: str) -> int:
    try:
        return _KIND_CODES[output_kind]
    except KeyError:
        raise ValueError(f"unknown output kind {output_kind!r}") from None


def write_raster(values: np.ndarray, path, output_kind: str = "metric-depth") -> None:
    """Atomically write a float raster (write to a sibling temp file, rename)."""
    path = Path(path)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"raster must be 2-D, got shape {values.shape}")
    height, width = values.shape
    header = _HEADER.pack(MAGIC, width, height, kind_code(output_kind))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(header + values.astype("<f4").tobytes())
    os.replace(tmp, path)


def read_raster(path) -> np.ndarray:
    """Read a PDEPTH01 float raster back as float64 (exact f32 promotion)."""
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: not a PDEPTH01 raster")
    _, width, height, code = _HEADER.unpack_from(blob)
    if code not in (DEPTH_CODE, DISPARITY_CODE):
        raise ValueError(f"{path}: unexpected kind code {code}")
    expected = _HEADER.size + 4 * width * height
    if len(blob) != expected:
        raise ValueError(f"{path}: truncated payload")
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    return data.reshape(height, width).astype(np.float64)


def image_size(path) -> tuple[int, int]:
    """(width, height) of an input image: PDEPTH01 or PNG headers."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(24)
    if head[:8] == MAGIC:
        _, width, height, _ = _HEADER.unpack_from(head)
        return width, height
    if head[:8] == b"\x89PNG\r\n\x1a\n":
        width, height = struct.unpack(">II", head[16:24])
        return width, height
    raise ValueError(f"{path}: unsupported image format (need PDEPTH01 or PNG)")
