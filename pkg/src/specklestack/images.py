"""Image containers, quantization to the finite gray-level domain, and file I/O.

Two pixel domains are used throughout the package:

* float intensity images: plain 2-D ``numpy.float64`` arrays, finite and
  non-negative (``as_float_image`` validates);
* quantized images: :class:`QuantizedImage`, integer gray levels in
  ``{0..levels}``.

File formats:

* PGM (P5, binary) for quantized images; maxval up to 65535 (two bytes per
  sample, most significant byte first, per the PGM convention);
* a raw float format with an ASCII header line ``F64 <width> <height>\\n``
  followed by the row-major little-endian float64 payload.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

MAX_LEVELS = 65535


def as_float_image(data) -> np.ndarray:
    """Validate and return a 2-D float64 intensity image.

    Values must be finite and non-negative.
    """
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("intensity image must be a non-empty 2-D array")
    if not np.all(np.isfinite(img)):
        raise ValueError("intensity image contains non-finite values")
    if img.min() < 0:
        raise ValueError("intensity image contains negative values")
    return img


@dataclass(frozen=True)
class QuantizedImage:
    """2-D grid of integer gray levels in ``{0..levels}``."""

    data: np.ndarray
    levels: int

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("quantized image must be a non-empty 2-D array")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("quantized image must have an integer dtype")
        if not 1 <= self.levels <= MAX_LEVELS:
            raise ValueError(f"levels must be in [1, {MAX_LEVELS}]")
        if arr.min() < 0 or arr.max() > self.levels:
            raise ValueError("pixel values outside [0, levels]")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class QuantizerSpec:
    """Parameters of the float -> {0..levels} mapping.

    ``lo``/``hi`` are the recorded bounds of a performed quantization; they
    are required for :func:`dequantize`.  Percentile clipping keeps
    heavy-tailed data from compressing all mass into a few levels.
    """

    levels: int = 255
    clip_pct: float = 99.0
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if not 1 <= self.levels <= MAX_LEVELS:
            raise ValueError(f"levels must be in [1, {MAX_LEVELS}]")
        if not 50.0 < self.clip_pct <= 100.0:
            raise ValueError("clip_pct must be in (50, 100]")
        if self.lo is not None and self.hi is not None and not self.lo < self.hi:
            raise ValueError("recorded bounds require lo < hi")


def quantize(img, spec: QuantizerSpec | None = None) -> tuple[QuantizedImage, QuantizerSpec]:
    """Map a float image onto ``{0..levels}``, recording the bounds used.

    ``lo`` is fixed at 0, ``hi`` is the ``clip_pct`` percentile of the image;
    values above ``hi`` saturate at ``levels``.  A constant image maps to all
    zeros (with a warning) since no meaningful range exists.
    """
    img = as_float_image(img)
    if spec is None:
        spec = QuantizerSpec()
    lo = 0.0
    hi = float(np.percentile(img, spec.clip_pct))
    if hi <= lo or img.min() == img.max():
        warnings.warn("degenerate intensity range; quantizing to all zeros")
        data = np.zeros(img.shape, dtype=np.int32)
        return QuantizedImage(data, spec.levels), replace(spec, lo=lo, hi=lo + 1.0)
    scaled = np.clip((img - lo) / (hi - lo), 0.0, 1.0)
    data = np.rint(spec.levels * scaled).astype(np.int32)
    return QuantizedImage(data, spec.levels), replace(spec, lo=lo, hi=hi)


def quantize_with_bounds(img, spec: QuantizerSpec) -> QuantizedImage:
    """Quantize using previously recorded bounds (shared-scale comparisons)."""
    img = as_float_image(img)
    if spec.lo is None or spec.hi is None:
        raise ValueError("spec has no recorded bounds")
    scaled = np.clip((img - spec.lo) / (spec.hi - spec.lo), 0.0, 1.0)
    return QuantizedImage(np.rint(spec.levels * scaled).astype(np.int32), spec.levels)


def dequantize(qimg: QuantizedImage, spec: QuantizerSpec) -> np.ndarray:
    """Invert :func:`quantize` on the level lattice: ``level -> lo + level/M*(hi-lo)``."""
    if spec.lo is None or spec.hi is None:
        raise ValueError("spec has no recorded bounds")
    return spec.lo + (qimg.data.astype(np.float64) / spec.levels) * (spec.hi - spec.lo)


# ---------------------------------------------------------------------------
# PGM (P5)

def write_pgm_bytes(qimg: QuantizedImage) -> bytes:
    header = f"P5\n{qimg.width} {qimg.height}\n{qimg.levels}\n".encode("ascii")
    if qimg.levels <= 255:
        payload = qimg.data.astype(">u1").tobytes()
    else:
        payload = qimg.data.astype(">u2").tobytes()
    return header + payload


def read_pgm_bytes(blob: bytes) -> QuantizedImage:
    if not blob.startswith(b"P5"):
        raise ValueError("not a binary PGM (P5) payload")
    pos = 2
    fields = []
    while len(fields) < 3:
        # skip whitespace and '#' comments between header fields
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        fields.append(blob[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise ValueError("malformed PGM header") from exc
    if width <= 0 or height <= 0 or not 1 <= maxval <= MAX_LEVELS:
        raise ValueError("invalid PGM dimensions or maxval")
    dtype = ">u1" if maxval <= 255 else ">u2"
    count = width * height
    payload = blob[pos:]
    expected = count * np.dtype(dtype).itemsize
    if len(payload) < expected:
        raise ValueError("truncated PGM payload")
    data = np.frombuffer(payload[:expected], dtype=dtype).reshape(height, width)
    return QuantizedImage(data.astype(np.int32), maxval)


def write_pgm(path, qimg: QuantizedImage) -> None:
    with open(path, "wb") as fh:
        fh.write(write_pgm_bytes(qimg))


def read_pgm(path) -> QuantizedImage:
    with open(path, "rb") as fh:
        return read_pgm_bytes(fh.read())


# ---------------------------------------------------------------------------
# Raw F64

def write_f64_bytes(img) -> bytes:
    img = as_float_image(img)
    header = f"F64 {img.shape[1]} {img.shape[0]}\n".encode("ascii")
    return header + img.astype("<f8").tobytes()


def read_f64_bytes(blob: bytes) -> np.ndarray:
    newline = blob.find(b"\n")
    if newline < 0 or not blob.startswith(b"F64 "):
        raise ValueError("not an F64 payload")
    parts = blob[:newline].split()
    if len(parts) != 3:
        raise ValueError("malformed F64 header")
    try:
        width, height = int(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ValueError("malformed F64 header") from exc
    if width <= 0 or height <= 0:
        raise ValueError("invalid F64 dimensions")
    payload = blob[newline + 1 :]
    expected = width * height * 8
    if len(payload) < expected:
        raise ValueError("truncated F64 payload")
    data = np.frombuffer(payload[:expected], dtype="<f8").reshape(height, width)
    return as_float_image(data)


def write_f64(path, img) -> None:
    with open(path, "wb") as fh:
        fh.write(write_f64_bytes(img))


def read_f64(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_f64_bytes(fh.read())
