"""Lee and Frost local-statistics speckle filters (comparison baselines).

Standard multiplicative-noise formulations on float intensity images; the
noise coefficient of variation is Cu = 1/sqrt(looks).  Borders replicate
edge pixels, matching the stack-filter pipeline.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .images import as_float_image


@dataclass(frozen=True)
class SpeckleFilterParams:
    """Window side (odd), equivalent looks, and Frost damping factor.

    The damping default (0.3) keeps the Frost weights wide enough on 1-look
    data (coefficient of variation near 1) that the filter actually smooths;
    larger values collapse the kernel onto the center pixel.
    """

    window: int = 7
    looks: float = 1.0
    damping: float = 0.3

    def __post_init__(self):
        if self.window % 2 == 0 or self.window < 1:
            raise ValueError("window must be odd and positive")
        if not self.looks >= 1:
            raise ValueError("looks must be >= 1")
        if not self.damping > 0:
            raise ValueError("damping must be > 0")


def _local_stats(img: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    mean = uniform_filter(img, size=size, mode="nearest")
    mean_sq = uniform_filter(img * img, size=size, mode="nearest")
    var = np.maximum(mean_sq - mean * mean, 0.0)
    return mean, var


def lee_filter(img, params: SpeckleFilterParams = SpeckleFilterParams()) -> np.ndarray:
    """Adaptive local-mean filter: out = m + W (z - m), W = max(0, 1 - Cu^2/Cz^2).

    Cz is the window coefficient of variation; constant windows (Cz = 0)
    return the window mean, i.e. the constant itself.
    """
    img = as_float_image(img)
    mean, var = _local_stats(img, params.window)
    cu2 = 1.0 / params.looks
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = 1.0 - cu2 * mean * mean / var
    weight = np.where(var > 0, np.clip(weight, 0.0, 1.0), 0.0)
    return mean + weight * (img - mean)


def frost_filter(img, params: SpeckleFilterParams = SpeckleFilterParams()) -> np.ndarray:
    """Exponentially weighted window mean: w(d) = exp(-damping * Cz^2 * d).

    d is the Euclidean offset distance from the window center and Cz^2 the
    local coefficient of variation squared at the center; weights are
    normalized to sum 1.
    """
    img = as_float_image(img)
    size = params.window
    half = size // 2
    mean, var = _local_stats(img, size)
    with np.errstate(divide="ignore", invalid="ignore"):
        cz2 = var / (mean * mean)
    cz2 = np.where(mean > 0, cz2, 0.0)
    padded = np.pad(img, half, mode="edge")
    h, w = img.shape
    num = np.zeros_like(img)
    den = np.zeros_like(img)
    for dy in range(-half, half + 1):
        for dx in range(-half, half + 1):
            d = float(np.hypot(dy, dx))
            weight = np.exp(-params.damping * cz2 * d)
            num += weight * padded[half + dy : half + dy + h, half + dx : half + dx + w]
            den += weight
    return num / den
