"""Binary (P5) PGM input/output for grayscale frames.

Frames on disk are 8-bit binary PGM. Readers return float64 arrays scaled
to [0, 1]; writers accept either uint8 arrays or floats in [0, 1].
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import DataError

_HEADER_TOKEN = re.compile(rb"^\s*(?:#.*\n\s*)*(\S+)")


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    m = _HEADER_TOKEN.match(buf[pos:])
    if m is None:
        raise DataError("truncated PGM header")
    return m.group(1), pos + m.end()


def read_pgm_header(path: str | Path) -> tuple[int, int]:
    """Return (width, height) without reading pixel data."""
    with open(path, "rb") as fh:
        buf = fh.read(512)
    magic, pos = _read_token(buf, 0)
    if magic != b"P5":
        raise DataError(f"{path}: not a binary PGM (magic {magic!r})")
    width, pos = _read_token(buf, pos)
    height, pos = _read_token(buf, pos)
    return int(width), int(height)


def read_pgm(path: str | Path) -> np.ndarray:
    """Read an 8-bit P5 PGM into a float64 (height, width) array in [0, 1]."""
    buf = Path(path).read_bytes()
    magic, pos = _read_token(buf, 0)
    if magic != b"P5":
        raise DataError(f"{path}: not a binary PGM (magic {magic!r})")
    width, pos = _read_token(buf, pos)
    height, pos = _read_token(buf, pos)
    maxval, pos = _read_token(buf, pos)
    width, height, maxval = int(width), int(height), int(maxval)
    if not 0 < maxval < 256:
        raise DataError(f"{path}: unsupported maxval {maxval}, expected 8-bit")
    pos += 1  # single whitespace byte after maxval
    n = width * height
    data = np.frombuffer(buf, dtype=np.uint8, count=n, offset=pos)
    if data.size != n:
        raise DataError(f"{path}: expected {n} pixels, file has {data.size}")
    return data.reshape(height, width).astype(np.float64) / maxval


def write_pgm(path: str | Path, frame: np.ndarray) -> None:
    """Write a (height, width) array as an 8-bit P5 PGM."""
    if frame.ndim != 2:
        raise DataError("PGM frames must be 2-D")
    if frame.dtype == np.uint8:
        data = frame
    else:
        data = np.clip(np.round(np.asarray(frame, dtype=np.float64) * 255), 0, 255)
        data = data.astype(np.uint8)
    height, width = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode())
        fh.write(data.tobytes())
