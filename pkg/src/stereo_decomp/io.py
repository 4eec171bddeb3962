"""Binary PGM (P5) images and PFM (Pf) disparity maps.

Both codecs work on bytes so errors can report the byte offset at which the
input stopped making sense. Files are read whole; the formats are small.
"""
from __future__ import annotations

import math
import re
from pathlib import Path

import numpy as np

from .dense import DisparityMap
from .errors import FormatError

PGM_MAXVALS = (255, 65535)
_WS = b" \t\r\n\v\f"
_INT = re.compile(rb"[0-9]+\Z")


class _Header:
    """Whitespace-separated header tokens with ``#`` comments (netpbm rules)."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.last = 0  # offset of the most recent token

    def token(self, what: str) -> tuple[bytes, int]:
        d = self.data
        while self.pos < len(d):
            if d[self.pos] in _WS:
                self.pos += 1
            elif d[self.pos] == ord("#"):
                end = d.find(b"\n", self.pos)
                self.pos = len(d) if end < 0 else end + 1
            else:
                break
        start = self.pos
        while self.pos < len(d) and d[self.pos] not in _WS and d[self.pos] != ord("#"):
            self.pos += 1
        if start == self.pos:
            raise FormatError(f"missing {what}", start)
        return d[start: self.pos], start

    def integer(self, what: str, lo: int = 1) -> int:
        tok, at = self.token(what)
        self.last = at
        if not _INT.match(tok):
            raise FormatError(f"{what} is not a decimal integer: {tok[:16]!r}", at)
        val = int(tok)
        if val < lo:
            raise FormatError(f"{what} must be >= {lo}, got {val}", at)
        return val

    def single_whitespace(self):
        if self.pos >= len(self.data) or self.data[self.pos] not in _WS:
            raise FormatError("expected one whitespace byte before the raster", self.pos)
        self.pos += 1


def _payload(data: bytes, start: int, nbytes: int) -> bytes:
    have = len(data) - start
    if have < nbytes:
        raise FormatError(f"truncated payload: expected {nbytes} bytes, found {have}", len(data))
    if have > nbytes:
        raise FormatError(f"{have - nbytes} unexpected bytes after the raster", start + nbytes)
    return data[start:]


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode a binary P5 image; returns ``uint8`` or ``uint16`` ``(H, W)``."""
    hdr = _Header(data)
    magic, at = hdr.token("magic number")
    if magic != b"P5":
        raise FormatError(f"not a binary PGM (magic {magic[:8]!r}, expected b'P5')", at)
    width = hdr.integer("width")
    height = hdr.integer("height")
    maxval = hdr.integer("maxval")
    if maxval not in PGM_MAXVALS:
        raise FormatError(f"unsupported maxval {maxval} (expected 255 or 65535)", hdr.last)
    hdr.single_whitespace()
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    raw = _payload(data, hdr.pos, width * height * dtype.itemsize)
    img = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    return img.astype(np.uint16 if maxval == 65535 else np.uint8)


def encode_pgm(image: np.ndarray, maxval: int | None = None) -> bytes:
    img = np.asarray(image)
    if img.ndim != 2 or img.size == 0:
        raise FormatError("PGM needs a non-empty 2-D array", 0)
    if maxval is None:
        maxval = 255 if img.dtype == np.uint8 else 65535
    if maxval not in PGM_MAXVALS:
        raise FormatError(f"unsupported maxval {maxval}", 0)
    if not np.issubdtype(img.dtype, np.integer):
        if not np.all(np.isfinite(img)) or np.any(img != np.round(img)):
            raise FormatError("PGM samples must be integers", 0)
    if img.min() < 0 or img.max() > maxval:
        raise FormatError(f"PGM samples must lie in [0, {maxval}]", 0)
    dtype = ">u2" if maxval == 65535 else "u1"
    head = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii")
    return head + img.astype(dtype).tobytes()


def _line(data: bytes, pos: int, what: str) -> tuple[bytes, int]:
    end = data.find(b"\n", pos)
    if end < 0:
        raise FormatError(f"unterminated {what} line", pos)
    return data[pos:end].strip(), end + 1


def decode_pfm(data: bytes) -> np.ndarray:
    """Decode a single-channel PFM into a top-to-bottom ``float32`` array."""
    magic, pos = _line(data, 0, "magic")
    if magic != b"Pf":
        raise FormatError(f"not a greyscale PFM (magic {magic[:8]!r}, expected b'Pf')", 0)
    dims_at = pos
    dims, pos = _line(data, pos, "dimension")
    parts = dims.split()
    if len(parts) != 2 or not all(_INT.match(p) for p in parts):
        raise FormatError(f"bad dimension line {dims[:32]!r}", dims_at)
    width, height = (int(p) for p in parts)
    if width < 1 or height < 1:
        raise FormatError(f"dimensions must be positive, got {width}x{height}", dims_at)
    scale_at = pos
    tok, pos = _line(data, pos, "scale")
    try:
        scale = float(tok)
    except ValueError:
        raise FormatError(f"bad scale {tok[:32]!r}", scale_at) from None
    if scale == 0 or not math.isfinite(scale):
        raise FormatError(f"scale must be finite and non-zero, got {scale}", scale_at)
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    raw = _payload(data, pos, width * height * 4)
    arr = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    return arr[::-1].astype(np.float32)


def encode_pfm(values: np.ndarray, little_endian: bool = True) -> bytes:
    arr = np.asarray(values)
    if arr.ndim != 2 or arr.size == 0:
        raise FormatError("PFM needs a non-empty 2-D array", 0)
    dtype = "<f4" if little_endian else ">f4"
    head = f"Pf\n{arr.shape[1]} {arr.shape[0]}\n{-1.0 if little_endian else 1.0}\n".encode("ascii")
    return head + np.ascontiguousarray(arr[::-1], dtype=dtype).tobytes()


def read_pgm(path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def write_pgm(path, image, maxval=None):
    Path(path).write_bytes(encode_pgm(image, maxval))


def read_pfm(path) -> np.ndarray:
    return decode_pfm(Path(path).read_bytes())


def write_pfm(path, values, little_endian=True):
    Path(path).write_bytes(encode_pfm(values, little_endian))


def read_disparity(path) -> DisparityMap:
    """PFM disparity; non-finite samples (Middlebury's ``inf``) are invalid."""
    vals = read_pfm(path).astype(np.float64)
    valid = np.isfinite(vals)
    return DisparityMap(np.where(valid, vals, 0.0), valid)


def write_disparity(path, disp: DisparityMap, little_endian=True):
    write_pfm(path, np.where(disp.valid, disp.values, np.inf), little_endian)


def read_image(path) -> np.ndarray:
    """Greyscale image as float64 from PGM, or from PFM for float inputs."""
    p = Path(path)
    data = p.read_bytes()
    if data[:2] == b"Pf":
        return decode_pfm(data).astype(np.float64)
    return decode_pgm(data).astype(np.float64)
