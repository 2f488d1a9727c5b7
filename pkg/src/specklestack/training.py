"""Filter design: ROI supervision, pattern statistics, optimal monotone fit.

Training minimizes the mean absolute error between the filter output and the
desired values.  By threshold decomposition the sum of absolute gray-level
errors equals the sum of binary errors across slices, so the per-pattern
counts N1(p) (events wanting output 1) and N0(p) (events wanting 0) are
sufficient statistics.  The optimal positive Boolean function is the exact
minimizer of

    cost(f) = sum_p [f(p)=0] N1(p) + [f(p)=1] N0(p)

subject to monotonicity, solved as a minimum s-t cut on the Boolean lattice:
source->p with capacity N1(p), p->sink with capacity N0(p), and infinite
edges along covering pairs p -> p|bit.  f(p)=1 exactly on the source side.
Among all minimum cuts the one with the smallest source side is returned
(residual reachability from the source), which assigns unobserved patterns 0
unless monotonicity forces 1.

Windows up to 4x4 (16 samples) use the full lattice; larger windows (up to
5x5) use a reduced graph over observed patterns only, which yields the same
function because zero-count patterns contribute no cost and the minimal
extension is taken.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, maximum_flow

from .images import QuantizedImage
from .stackfilter import (
    PositiveBooleanFunction,
    WindowShape,
    _window_view,
    pattern_to_string,
    string_to_pattern,
)

POLICIES = ("mean", "median", "q25", "q75", "free")

_DENSE_MAX_BITS = 16
_CAP_LIMIT = 2**31 - 4  # scipy max-flow works on int32 capacities


@dataclass
class Region:
    """Named rectangle or polygon with an ideal-value policy.

    Exactly one of ``rect`` (x, y, width, height) and ``polygon`` (list of
    (x, y) vertices) must be set.  ``value`` is required for the ``free``
    policy; ``resolved`` is filled in by training.
    """

    name: str
    rect: tuple[int, int, int, int] | None = None
    polygon: tuple[tuple[float, float], ...] | None = None
    policy: str = "mean"
    value: float | None = None
    resolved: int | None = None

    def __post_init__(self):
        if (self.rect is None) == (self.polygon is None):
            raise ValueError("region needs exactly one of rect or polygon")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.policy == "free" and self.value is None:
            raise ValueError("free policy requires a value")
        if self.polygon is not None and len(self.polygon) < 3:
            raise ValueError("polygon needs at least 3 vertices")


@dataclass
class RoiSet:
    """The training supervision: an ordered list of regions."""

    regions: list[Region] = field(default_factory=list)

    def to_json(self) -> str:
        out = []
        for r in self.regions:
            entry: dict = {"name": r.name, "policy": r.policy}
            if r.rect is not None:
                x, y, w, h = (int(v) for v in r.rect)
                entry["rect"] = {"x": x, "y": y, "width": w, "height": h}
            else:
                entry["polygon"] = [[float(px), float(py)] for px, py in r.polygon]
            if r.value is not None:
                entry["value"] = r.value
            if r.resolved is not None:
                entry["resolved"] = r.resolved
            out.append(entry)
        return json.dumps({"regions": out}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RoiSet":
        doc = json.loads(text)
        regions = []
        for entry in doc.get("regions", []):
            rect = None
            polygon = None
            if "rect" in entry:
                r = entry["rect"]
                rect = (int(r["x"]), int(r["y"]), int(r["width"]), int(r["height"]))
            if "polygon" in entry:
                polygon = tuple((float(p[0]), float(p[1])) for p in entry["polygon"])
            regions.append(
                Region(
                    name=str(entry["name"]),
                    rect=rect,
                    polygon=polygon,
                    policy=entry.get("policy", "mean"),
                    value=entry.get("value"),
                    resolved=entry.get("resolved"),
                )
            )
        return cls(regions)


def region_mask(region: Region, width: int, height: int) -> np.ndarray:
    """Boolean pixel mask of a region; raises if it leaves the image or is empty."""
    if region.rect is not None:
        x, y, w, h = region.rect
        if w < 1 or h < 1 or x < 0 or y < 0 or x + w > width or y + h > height:
            raise ValueError(f"region {region.name!r} outside the image")
        mask = np.zeros((height, width), dtype=bool)
        mask[y : y + h, x : x + w] = True
        return mask
    for px, py in region.polygon:
        if not (0 <= px <= width - 1 and 0 <= py <= height - 1):
            raise ValueError(f"region {region.name!r} outside the image")
    canvas = Image.new("1", (width, height), 0)
    ImageDraw.Draw(canvas).polygon([(float(px), float(py)) for px, py in region.polygon], fill=1, outline=1)
    mask = np.array(canvas, dtype=bool)
    if not mask.any():
        raise ValueError(f"region {region.name!r} rasterizes to no pixels")
    return mask


@dataclass(frozen=True)
class RegionStats:
    mean: float
    median: float
    q25: float
    q75: float
    count: int
    histogram: np.ndarray


def region_stats(img: QuantizedImage, region: Region) -> RegionStats:
    """Descriptive statistics over the region's pixels.

    Quantiles use linear interpolation between order statistics, so the
    median/quartile policies are reproducible.
    """
    mask = region_mask(region, img.width, img.height)
    values = img.data[mask]
    if values.size == 0:
        raise ValueError(f"region {region.name!r} is empty")
    q25, median, q75 = np.percentile(values, [25.0, 50.0, 75.0], method="linear")
    return RegionStats(
        mean=float(values.mean()),
        median=float(median),
        q25=float(q25),
        q75=float(q75),
        count=int(values.size),
        histogram=np.bincount(values, minlength=img.levels + 1),
    )


def resolve_ideal(region: Region, stats: RegionStats, levels: int) -> int:
    """Resolve a region's policy to a gray level (nearest integer, ties to even)."""
    if region.policy == "mean":
        raw = stats.mean
    elif region.policy == "median":
        raw = stats.median
    elif region.policy == "q25":
        raw = stats.q25
    elif region.policy == "q75":
        raw = stats.q75
    else:
        raw = float(region.value)
    resolved = int(np.rint(raw))
    if not 0 <= resolved <= levels:
        raise ValueError(f"resolved ideal {resolved} outside [0, {levels}]")
    return resolved


# ---------------------------------------------------------------------------
# Pattern statistics

class PatternStats:
    """Per-pattern desired-1 / desired-0 event counts across all thresholds.

    Dense count arrays for windows up to 16 samples, a dict for larger ones.
    """

    def __init__(self, window: WindowShape):
        self.window = window
        self._dense = window.n <= _DENSE_MAX_BITS
        if self._dense:
            self._n1 = np.zeros(1 << window.n, dtype=np.int64)
            self._n0 = np.zeros(1 << window.n, dtype=np.int64)
        else:
            self._counts: dict[int, list[int]] = {}

    def add_batch(self, patterns: np.ndarray, desired_bits: np.ndarray) -> None:
        if self._dense:
            keys = (patterns.astype(np.int64) << 1) | desired_bits
            counts = np.bincount(keys, minlength=2 << self.window.n)
            pairs = counts.reshape(-1, 2)
            self._n0 += pairs[:, 0]
            self._n1 += pairs[:, 1]
        else:
            keys = (patterns.astype(np.int64) << 1) | desired_bits
            uniq, cnt = np.unique(keys, return_counts=True)
            for key, c in zip(uniq.tolist(), cnt.tolist()):
                entry = self._counts.setdefault(key >> 1, [0, 0])
                entry[key & 1] += c

    def n1_of(self, pattern: int) -> int:
        if self._dense:
            return int(self._n1[pattern])
        return self._counts.get(pattern, (0, 0))[1]

    def n0_of(self, pattern: int) -> int:
        if self._dense:
            return int(self._n0[pattern])
        return self._counts.get(pattern, (0, 0))[0]

    def nonzero(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(patterns, n1, n0) for patterns with any events, sorted ascending."""
        if self._dense:
            idx = np.flatnonzero(self._n1 | self._n0)
            return idx.astype(np.int64), self._n1[idx], self._n0[idx]
        patterns = np.array(sorted(self._counts), dtype=np.int64)
        n1 = np.array([self._counts[p][1] for p in patterns], dtype=np.int64)
        n0 = np.array([self._counts[p][0] for p in patterns], dtype=np.int64)
        return patterns, n1, n0

    def total_events(self) -> int:
        if self._dense:
            return int(self._n1.sum() + self._n0.sum())
        return sum(c0 + c1 for c0, c1 in self._counts.values())

    def to_text(self) -> str:
        patterns, n1, n0 = self.nonzero()
        lines = [f"PSTATS {self.window.n}"]
        for p, c1, c0 in zip(patterns.tolist(), n1.tolist(), n0.tolist()):
            lines.append(f"{pattern_to_string(p, self.window.n)} {c1} {c0}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, window: WindowShape) -> "PatternStats":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("PSTATS "):
            raise ValueError("missing PSTATS header")
        if int(lines[0].split()[1]) != window.n:
            raise ValueError("window size mismatch")
        stats = cls(window)
        for ln in lines[1:]:
            pat, c1, c0 = ln.split()
            p = string_to_pattern(pat)
            if int(c1):
                stats.add_batch(np.full(int(c1), p, dtype=np.int64), np.ones(int(c1), dtype=np.int64))
            if int(c0):
                stats.add_batch(np.full(int(c0), p, dtype=np.int64), np.zeros(int(c0), dtype=np.int64))
        return stats


def accumulate_stats(
    observed: QuantizedImage,
    ideal_values: np.ndarray,
    mask: np.ndarray,
    window: WindowShape,
) -> PatternStats:
    """Accumulate threshold-event counts over the masked training pixels.

    For every training pixel s and level m in 1..M the observed thresholded
    window pattern p gets one event: desired bit 1 if ideal(s) >= m else 0.
    ``ideal_values`` gives the desired gray level per pixel (ROI mode fills
    regions with their resolved value, full-image mode passes the clean
    image).
    """
    ideal_values = np.asarray(ideal_values)
    mask = np.asarray(mask, dtype=bool)
    if ideal_values.shape != observed.data.shape or mask.shape != observed.data.shape:
        raise ValueError("ideal/mask shapes must match the observed image")
    if not mask.any():
        raise ValueError("no training pixels selected")
    if ideal_values[mask].min() < 0 or ideal_values[mask].max() > observed.levels:
        raise ValueError("ideal values outside [0, levels]")
    win = _window_view(observed.data, window)[mask]
    ideals = ideal_values[mask].astype(np.int64)
    pow2 = (np.int64(1) << np.arange(window.n, dtype=np.int64))
    stats = PatternStats(window)
    for m in range(1, observed.levels + 1):
        patterns = (win >= m).astype(np.int64) @ pow2
        desired = (ideals >= m).astype(np.int64)
        stats.add_batch(patterns, desired)
    return stats


# ---------------------------------------------------------------------------
# Exact monotone fit via minimum cut

def _solve_mincut(graph: csr_matrix) -> tuple[np.ndarray, int]:
    """Max-flow then residual BFS from the source; returns (reachable mask, flow)."""
    result = maximum_flow(graph, 0, 1)
    residual = graph - result.flow
    residual.data = np.where(residual.data > 0, residual.data, 0)
    residual.eliminate_zeros()
    order = breadth_first_order(residual, 0, directed=True, return_predecessors=False)
    reach = np.zeros(graph.shape[0], dtype=bool)
    reach[order] = True
    return reach, int(result.flow_value)


def _check_capacity(total: int) -> None:
    if total > _CAP_LIMIT:
        raise ValueError("training set too large for int32 cut capacities")


def _fit_lattice(stats: PatternStats) -> tuple[PositiveBooleanFunction, int]:
    n = stats.window.n
    size = 1 << n
    patterns, n1_nz, n0_nz = stats.nonzero()
    n1 = np.zeros(size, dtype=np.int64)
    n0 = np.zeros(size, dtype=np.int64)
    n1[patterns] = n1_nz
    n0[patterns] = n0_nz
    total = int(n1.sum() + n0.sum())
    _check_capacity(total)
    inf = total + 1
    ps = np.arange(size, dtype=np.int64)
    rows = [np.zeros(len(patterns), dtype=np.int64)[n1_nz > 0]]
    cols = [(patterns + 2)[n1_nz > 0]]
    caps = [n1_nz[n1_nz > 0]]
    rows.append((patterns + 2)[n0_nz > 0])
    cols.append(np.full(int((n0_nz > 0).sum()), 1, dtype=np.int64))
    caps.append(n0_nz[n0_nz > 0])
    for j in range(n):
        lower = ps[(ps >> j) & 1 == 0]
        rows.append(lower + 2)
        cols.append((lower | (1 << j)) + 2)
        caps.append(np.full(lower.size, inf, dtype=np.int64))
    graph = csr_matrix(
        (np.concatenate(caps).astype(np.int32), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size + 2, size + 2),
        dtype=np.int32,
    )
    reach, flow_value = _solve_mincut(graph)
    f_true = reach[2:]
    minimal = f_true.copy()
    for j in range(n):
        upper = ps[(ps >> j) & 1 == 1]
        minimal[upper] &= ~f_true[upper ^ (1 << j)]
    terms = tuple(int(p) for p in ps[minimal])
    return PositiveBooleanFunction(stats.window, terms), flow_value


def _fit_observed(stats: PatternStats) -> tuple[PositiveBooleanFunction, int]:
    patterns, n1, n0 = stats.nonzero()
    d = patterns.size
    if d == 0:
        return PositiveBooleanFunction(stats.window, ()), 0
    total = int(n1.sum() + n0.sum())
    _check_capacity(total)
    inf = total + 1
    rows = [np.zeros(int((n1 > 0).sum()), dtype=np.int64), np.arange(d, dtype=np.int64)[n0 > 0] + 2]
    cols = [np.arange(d, dtype=np.int64)[n1 > 0] + 2, np.full(int((n0 > 0).sum()), 1, dtype=np.int64)]
    caps = [n1[n1 > 0], n0[n0 > 0]]
    # comparability edges among observed patterns (chunked to bound memory)
    chunk = max(1, (1 << 22) // max(d, 1))
    for start in range(0, d, chunk):
        block = patterns[start : start + chunk, None]
        below = (block & patterns[None, :]) == block
        below[np.arange(block.shape[0]), start + np.arange(block.shape[0])] = False
        src_idx, dst_idx = np.nonzero(below)
        rows.append(src_idx + start + 2)
        cols.append(dst_idx + 2)
        caps.append(np.full(src_idx.size, inf, dtype=np.int64))
    graph = csr_matrix(
        (np.concatenate(caps).astype(np.int32), (np.concatenate(rows), np.concatenate(cols))),
        shape=(d + 2, d + 2),
        dtype=np.int32,
    )
    reach, flow_value = _solve_mincut(graph)
    chosen = patterns[reach[2:]]
    # minimal elements of the source side form the antichain
    order = np.argsort([int(p).bit_count() for p in chosen], kind="stable")
    terms: list[int] = []
    for p in (int(chosen[i]) for i in order):
        if not any(t & p == t for t in terms):
            terms.append(p)
    return PositiveBooleanFunction(stats.window, tuple(terms)), flow_value


def _fit(stats: PatternStats, method: str = "auto") -> tuple[PositiveBooleanFunction, int]:
    if method == "auto":
        method = "lattice" if stats.window.n <= _DENSE_MAX_BITS else "observed"
    if method == "lattice":
        return _fit_lattice(stats)
    if method == "observed":
        return _fit_observed(stats)
    raise ValueError(f"unknown fit method {method!r}")


def fit_monotone(stats: PatternStats) -> PositiveBooleanFunction:
    """MAE-optimal positive Boolean function for the accumulated counts.

    Deterministic: among all minimizers, the one whose true-set is smallest
    (so all-zero counts give the constant-0 function).
    """
    pbf, _ = _fit(stats)
    return pbf


def training_cost(f: PositiveBooleanFunction, stats: PatternStats) -> int:
    """cost(f) = sum of N1 over false patterns plus N0 over true patterns."""
    patterns, n1, n0 = stats.nonzero()
    if patterns.size == 0:
        return 0
    fvals = np.zeros(patterns.size, dtype=bool)
    for t in f.terms:
        fvals |= (patterns & t) == t
    return int(n1[~fvals].sum() + n0[fvals].sum())


# ---------------------------------------------------------------------------
# Training drivers

def train_from_rois(
    observed: QuantizedImage,
    rois: RoiSet,
    window: WindowShape = WindowShape(3, 3),
) -> PositiveBooleanFunction:
    """Resolve each region's ideal value, accumulate over ROI pixels, fit.

    Ideal values are resolved once on the given (original) image and stored
    back into ``rois`` so the same supervision can be replayed; later regions
    override earlier ones where they overlap.
    """
    if not rois.regions:
        raise ValueError("RoiSet has no regions")
    ideal_values = np.zeros(observed.data.shape, dtype=np.int64)
    mask = np.zeros(observed.data.shape, dtype=bool)
    for region in rois.regions:
        stats = region_stats(observed, region)
        region.resolved = resolve_ideal(region, stats, observed.levels)
        rmask = region_mask(region, observed.width, observed.height)
        ideal_values[rmask] = region.resolved
        mask |= rmask
    return fit_monotone(accumulate_stats(observed, ideal_values, mask, window))


def train_full_images(
    observed: QuantizedImage,
    ideal: QuantizedImage,
    window: WindowShape = WindowShape(3, 3),
) -> PositiveBooleanFunction:
    """Classical training from a (degraded, noiseless) pair over all pixels."""
    if observed.data.shape != ideal.data.shape:
        raise ValueError("observed and ideal dimensions differ")
    if observed.levels != ideal.levels:
        raise ValueError("observed and ideal levels differ")
    mask = np.ones(observed.data.shape, dtype=bool)
    return fit_monotone(accumulate_stats(observed, ideal.data, mask, window))
