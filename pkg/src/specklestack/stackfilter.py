"""Threshold decomposition, positive Boolean functions, and stack filtering.

A gray-level image over {0..M} decomposes into M stacked binary slices
(slice m = pixels >= m).  A positive Boolean function f (OR of ANDs of
uncomplemented variables, stored as the antichain of its minimal true
window patterns) filters each slice; summing the filtered slices gives the
stack-filtered image.  Because f is monotone, the slices stay stacked, and
the whole sum collapses to a direct gray-level rule: the output pixel is
the maximum over terms of the minimum gray value inside each term's
offsets.  Both paths are implemented; they are bit-identical.

Window patterns are indexed in raster order (row-major, top-left to
bottom-right); bit j of an integer pattern corresponds to window offset j.
Borders are handled by replicate-edge padding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .images import QuantizedImage

MAX_WINDOW_BITS = 25


class StackingViolationError(ValueError):
    """Binary slices passed to reconstruction are not monotonically stacked."""


@dataclass(frozen=True)
class WindowShape:
    """Odd-sized sliding window; offsets are raster-ordered (dy, dx) pairs."""

    width: int = 3
    height: int = 3

    def __post_init__(self):
        if self.width % 2 == 0 or self.height % 2 == 0 or self.width < 1 or self.height < 1:
            raise ValueError("window sides must be odd and positive")
        if self.width * self.height > MAX_WINDOW_BITS:
            raise ValueError(f"window size capped at {MAX_WINDOW_BITS} samples")

    @property
    def n(self) -> int:
        return self.width * self.height

    def offsets(self) -> list[tuple[int, int]]:
        hh, hw = self.height // 2, self.width // 2
        return [(dy, dx) for dy in range(-hh, hh + 1) for dx in range(-hw, hw + 1)]

    @property
    def center_bit(self) -> int:
        return self.n // 2


def pattern_to_string(pattern: int, n: int) -> str:
    """Render bit j of ``pattern`` as character j of a 0/1 string."""
    return "".join("1" if (pattern >> j) & 1 else "0" for j in range(n))


def string_to_pattern(text: str) -> int:
    if not text or any(c not in "01" for c in text):
        raise ValueError(f"pattern string must be non-empty 0/1, got {text!r}")
    mask = 0
    for j, c in enumerate(text):
        if c == "1":
            mask |= 1 << j
    return mask


@dataclass(frozen=True)
class PositiveBooleanFunction:
    """Antichain of minimal true window patterns; f(w)=1 iff some term <= w.

    ``terms`` are integer bitmasks over the window offsets, sorted ascending.
    An empty term set is the constant-0 function; a lone all-zeros term is the
    constant-1 function.
    """

    window: WindowShape
    terms: tuple[int, ...]

    def __post_init__(self):
        n = self.window.n
        terms = tuple(sorted(set(int(t) for t in self.terms)))
        for t in terms:
            if t < 0 or t >> n:
                raise ValueError(f"term {t} outside the {n}-bit window")
        for i, a in enumerate(terms):
            for b in terms[i + 1 :]:
                if a & b == a or a & b == b:
                    raise ValueError("terms must form an antichain (no term covers another)")
        object.__setattr__(self, "terms", terms)

    @property
    def n(self) -> int:
        return self.window.n

    @classmethod
    def identity(cls, window: WindowShape) -> "PositiveBooleanFunction":
        """Center-only term: the stack filter is the identity."""
        return cls(window, (1 << window.center_bit,))

    @classmethod
    def from_strings(cls, window: WindowShape, patterns) -> "PositiveBooleanFunction":
        return cls(window, tuple(string_to_pattern(p) for p in patterns))


def pbf_to_text(f: PositiveBooleanFunction) -> str:
    lines = [f"PBF {f.window.width} {f.window.height} {len(f.terms)}"]
    lines.extend(pattern_to_string(t, f.n) for t in f.terms)
    return "\n".join(lines) + "\n"


def pbf_from_text(text: str) -> PositiveBooleanFunction:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("PBF "):
        raise ValueError("missing PBF header")
    parts = lines[0].split()
    if len(parts) != 4:
        raise ValueError("malformed PBF header")
    width, height, k = int(parts[1]), int(parts[2]), int(parts[3])
    window = WindowShape(width, height)
    if len(lines) - 1 != k:
        raise ValueError(f"expected {k} terms, found {len(lines) - 1}")
    terms = []
    for ln in lines[1:]:
        if len(ln) != window.n:
            raise ValueError(f"term {ln!r} is not {window.n} characters")
        terms.append(string_to_pattern(ln))
    return PositiveBooleanFunction(window, tuple(terms))


# ---------------------------------------------------------------------------
# Threshold decomposition

def threshold(img: QuantizedImage, m: int) -> np.ndarray:
    """Binary slice at level m: 1 where pixel >= m (1 <= m <= levels)."""
    if not 1 <= m <= img.levels:
        raise ValueError(f"threshold level must be in [1, {img.levels}]")
    return (img.data >= m).astype(np.uint8)

def decompose(img: QuantizedImage) -> np.ndarray:
    """All slices stacked: shape (levels, H, W), slice index i = level i+1."""
    ms = np.arange(1, img.levels + 1, dtype=img.data.dtype)
    return (img.data[None, :, :] >= ms[:, None, None]).astype(np.uint8)


def reconstruct(slices: np.ndarray) -> QuantizedImage:
    """Sum stacked binary slices back into a gray-level image.

    Slices must satisfy the stacking property (slice m >= slice m+1
    pointwise); the reconstruction of a decomposition is exact.
    """
    slices = np.asarray(slices)
    if slices.ndim != 3:
        raise ValueError("expected (levels, H, W) slice stack")
    if np.any((slices != 0) & (slices != 1)):
        raise ValueError("slices must be binary")
    if np.any(slices[:-1] < slices[1:]):
        raise StackingViolationError("slices are not stacked (slice m < slice m+1 somewhere)")
    data = slices.sum(axis=0, dtype=np.int32)
    return QuantizedImage(data, slices.shape[0])


# ---------------------------------------------------------------------------
# Evaluation and application

def eval_pbf(f: PositiveBooleanFunction, pattern) -> int:
    """Evaluate f on one window pattern (bit sequence or integer mask)."""
    if isinstance(pattern, (int, np.integer)):
        mask = int(pattern)
        if mask < 0 or mask >> f.n:
            raise ValueError("pattern outside window")
    else:
        bits = list(pattern)
        if len(bits) != f.n:
            raise ValueError(f"pattern must have {f.n} bits")
        mask = 0
        for j, b in enumerate(bits):
            if b not in (0, 1):
                raise ValueError("pattern bits must be 0/1")
            if b:
                mask |= 1 << j
    return 1 if any(t & mask == t for t in f.terms) else 0


def _window_view(data: np.ndarray, window: WindowShape) -> np.ndarray:
    """(H, W, n) view of replicate-padded sliding windows, raster-ordered."""
    hh, hw = window.height // 2, window.width // 2
    padded = np.pad(data, ((hh, hh), (hw, hw)), mode="edge")
    view = np.lib.stride_tricks.sliding_window_view(padded, (window.height, window.width))
    return view.reshape(data.shape[0], data.shape[1], window.n)


def _term_offsets(f: PositiveBooleanFunction) -> list[np.ndarray]:
    return [np.flatnonzero([(t >> j) & 1 for j in range(f.n)]) for t in f.terms]


def apply_stack_reference(f: PositiveBooleanFunction, img: QuantizedImage) -> QuantizedImage:
    """Reference path: filter every threshold slice with f and sum."""
    win = _window_view(img.data, f.window)
    offsets = _term_offsets(f)
    out = np.zeros(img.data.shape, dtype=np.int32)
    for m in range(1, img.levels + 1):
        bits = win >= m
        fired = np.zeros(img.data.shape, dtype=bool)
        for offs in offsets:
            if offs.size:
                fired |= bits[:, :, offs].all(axis=2)
            else:
                fired |= True
        out += fired
    return QuantizedImage(out, img.levels)


def apply_stack_fast(f: PositiveBooleanFunction, img: QuantizedImage) -> QuantizedImage:
    """Fast path: max over terms of min over each term's window samples.

    Bit-identical to the reference path (the slice sum counts the levels m
    with f(slice)=1, which by monotonicity is the largest m where some term's
    offsets all reach m).
    """
    if not f.terms:
        return QuantizedImage(np.zeros(img.data.shape, dtype=np.int32), img.levels)
    win = _window_view(img.data, f.window)
    out = np.zeros(img.data.shape, dtype=np.int32)
    for offs in _term_offsets(f):
        if offs.size:
            term_min = win[:, :, offs].min(axis=2)
        else:
            term_min = np.full(img.data.shape, img.levels, dtype=np.int32)
        np.maximum(out, term_min, out=out)
    return QuantizedImage(out.astype(np.int32), img.levels)


def apply_iterated(f: PositiveBooleanFunction, img: QuantizedImage, k: int) -> QuantizedImage:
    """k-fold composition of the stack filter (k >= 1)."""
    if k < 1:
        raise ValueError("iteration count must be >= 1")
    out = img
    for _ in range(k):
        out = apply_stack_fast(f, out)
    return out
