"""G0 intensity model for speckled returns, plus synthetic phantom scenes.

The observed return is modeled multiplicatively, Z = X * Y, with backscatter
X following a reciprocal-of-Gamma law and speckle Y a unit-mean Gamma law.
The product follows the heavy-tailed G0 intensity distribution with
roughness ``alpha < 0``, scale ``gamma > 0`` and equivalent number of looks
``looks >= 1``.  Roughness near 0 means extremely textured data (urban),
large negative roughness means smooth areas (pasture).
"""
from __future__ import annotations

import importlib.resources
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .images import as_float_image, read_pgm_bytes


class NoFiniteMeanError(ValueError):
    """Raised when a unit-mean construction is requested but the mean diverges."""


@dataclass(frozen=True)
class G0Params:
    """Roughness / scale / looks triple of the G0 intensity law."""

    alpha: float
    gamma: float
    looks: float = 1.0

    def __post_init__(self):
        if not self.alpha < 0:
            raise ValueError("alpha must be strictly negative")
        if not self.gamma > 0:
            raise ValueError("gamma must be strictly positive")
        if not self.looks >= 1:
            raise ValueError("looks must be >= 1")


def g0_density(z, p: G0Params):
    """Density of the G0 intensity law, evaluated in log-domain.

    f(z) = n^n Gamma(n-a) / (g^a Gamma(n) Gamma(-a)) * z^(n-1) / (g + n z)^(n-a)

    with a = roughness, g = scale, n = looks.  Requires z > 0 (for n > 1 the
    density vanishes at 0; for n = 1 it has the finite limit -a/g).
    """
    z = np.asarray(z, dtype=np.float64)
    if np.any(z <= 0):
        raise ValueError("density defined for z > 0")
    a, g, n = p.alpha, p.gamma, p.looks
    log_const = n * np.log(n) + gammaln(n - a) - a * np.log(g) - gammaln(n) - gammaln(-a)
    log_f = log_const + (n - 1.0) * np.log(z) - (n - a) * np.log(g + n * z)
    out = np.exp(log_f)
    return float(out) if out.ndim == 0 else out


def g0_moment(r: float, p: G0Params) -> float:
    """r-th order moment: (g/n)^r Gamma(-a-r) Gamma(n+r) / (Gamma(-a) Gamma(n)).

    Finite only when alpha < -r; returns ``math.inf`` otherwise.
    """
    if r < 0:
        raise ValueError("moment order must be non-negative")
    a, g, n = p.alpha, p.gamma, p.looks
    if not a < -r:
        return float("inf")
    log_m = r * (np.log(g) - np.log(n)) + gammaln(-a - r) + gammaln(n + r) - gammaln(-a) - gammaln(n)
    return float(np.exp(log_m))


def g0_variance(p: G0Params) -> float:
    """Variance from the first two moments (infinite when alpha >= -2)."""
    m1 = g0_moment(1, p)
    m2 = g0_moment(2, p)
    if not np.isfinite(m2):
        return float("inf")
    return m2 - m1 * m1


def gamma_star(alpha: float, looks: float = 1.0) -> float:
    """Scale giving a unit-mean G0 law for the given roughness and looks.

    Since the mean is linear in the scale, the unit-mean scale is the
    reciprocal of the mean at scale 1 (which reduces to -alpha-1,
    independent of looks).
    """
    if not alpha < -1:
        raise NoFiniteMeanError("mean is infinite for alpha >= -1")
    m1 = g0_moment(1, G0Params(alpha, 1.0, looks))
    return 1.0 / m1


def sample_g0(p: G0Params, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` G0 intensities as backscatter * speckle.

    Backscatter: reciprocal of Gamma(shape=-alpha, rate=gamma).
    Speckle: Gamma(shape=looks, rate=looks), unit mean.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    x = 1.0 / rng.gamma(shape=-p.alpha, scale=1.0 / p.gamma, size=count)
    y = rng.gamma(shape=p.looks, scale=1.0 / p.looks, size=count)
    return x * y


# ---------------------------------------------------------------------------
# Phantoms

TWO_REGION = "two-region-vertical"
STRIPS_AND_POINTS = "strips-and-points"

STRIP_WIDTHS = (1, 2, 3, 5, 7, 9)
STRIP_GAP = 16
POINT_GRID = 5


@dataclass(frozen=True)
class PhantomSpec:
    """Synthetic scene: region geometry plus a (G0Params, target mean) per region.

    ``two-region-vertical`` splits at column width//2 (region 0 left,
    region 1 right).  ``strips-and-points`` places light strips and isolated
    points (region 1) on a background (region 0); see
    :func:`strips_points_labels` for the fixed layout.
    """

    kind: str
    width: int
    height: int
    regions: tuple[tuple[G0Params, float], ...]
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in (TWO_REGION, STRIPS_AND_POINTS):
            raise ValueError(f"unknown phantom kind {self.kind!r}")
        if self.width < 2 or self.height < 2:
            raise ValueError("phantom must be at least 2x2")
        if len(self.regions) != 2:
            raise ValueError("phantom specs take exactly 2 regions")
        for _, mean in self.regions:
            if not mean > 0:
                raise ValueError("target means must be positive")


def strips_points_labels(width: int, height: int) -> np.ndarray:
    """Fixed strips-and-points layout: label 1 on strips/points, 0 on background.

    Vertical strips of widths 1, 2, 3, 5, 7, 9 px separated by 16 px of
    background starting at column 16, plus a 5x5 grid of isolated single
    points in the area right of the strips.  The 256x256 instance is frozen
    as a mask shipped with the package.
    """
    if width < 64 or height < 64:
        raise ValueError("strips layout needs at least 64x64")
    labels = np.zeros((height, width), dtype=np.int32)
    x = STRIP_GAP
    for w in STRIP_WIDTHS:
        if x + w > width - STRIP_GAP:
            break
        labels[:, x : x + w] = 1
        x += w + STRIP_GAP
    px0 = min(x + 2 * STRIP_GAP, width - STRIP_GAP - 1)
    cols = np.unique(np.rint(np.linspace(px0, width - STRIP_GAP, POINT_GRID)).astype(int))
    rows = np.unique(np.rint(np.linspace(STRIP_GAP, height - STRIP_GAP, POINT_GRID)).astype(int))
    for r in rows:
        for c in cols:
            labels[r, c] = 1
    return labels


def reference_strips_mask() -> np.ndarray:
    """The committed 256x256 strips-and-points mask (regression anchor)."""
    blob = importlib.resources.files("specklestack.data").joinpath("strips_points_256.pgm").read_bytes()
    return read_pgm_bytes(blob).data


def make_phantom(spec: PhantomSpec, rng: np.random.Generator | None = None):
    """Generate (noisy, ideal, labels) for a phantom scene.

    The ideal image holds each region's target mean; the noisy image holds
    G0 samples whose scale is ``mean * gamma_star(alpha, looks)`` so the
    theoretical mean of each region equals its target.  Sampling order is
    region 0 then region 1, row-major within a region, so results are
    reproducible from the seed.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if spec.kind == TWO_REGION:
        labels = np.zeros((spec.height, spec.width), dtype=np.int32)
        labels[:, spec.width // 2 :] = 1
    else:
        labels = strips_points_labels(spec.width, spec.height)
    noisy = np.empty((spec.height, spec.width), dtype=np.float64)
    ideal = np.empty_like(noisy)
    for region_id, (params, mean) in enumerate(spec.regions):
        scale = mean * gamma_star(params.alpha, params.looks)
        scaled = G0Params(params.alpha, scale, params.looks)
        mask = labels == region_id
        noisy[mask] = sample_g0(scaled, int(mask.sum()), rng)
        ideal[mask] = mean
    return as_float_image(noisy), as_float_image(ideal), labels
