"""Pixelwise Gaussian maximum-likelihood classification.

Classes are fit from user-labeled regions (sample mean and unbiased sample
variance per region, with a small variance floor so constant regions
survive); classification assigns each pixel the class maximizing the
univariate Gaussian log-density plus log prior, breaking exact ties toward
the lowest label.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .images import QuantizedImage

VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class GaussianClass:
    label: int
    mean: float
    variance: float
    prior: float = 1.0

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        if not self.prior > 0:
            raise ValueError("prior must be positive")


def fit_classes(img: QuantizedImage, labeled_masks: dict[int, np.ndarray]) -> list[GaussianClass]:
    """Fit one Gaussian per labeled mask; regions need at least 2 pixels."""
    if not labeled_masks:
        raise ValueError("no labeled regions")
    classes = []
    for label in sorted(labeled_masks):
        values = img.data[np.asarray(labeled_masks[label], dtype=bool)]
        if values.size < 2:
            raise ValueError(f"region for class {label} has fewer than 2 pixels")
        variance = max(float(values.var(ddof=1)), VARIANCE_FLOOR)
        classes.append(GaussianClass(int(label), float(values.mean()), variance))
    return classes


def classify(img: QuantizedImage, classes: list[GaussianClass]) -> np.ndarray:
    """Label map of per-pixel argmax of class log-densities (plus log prior)."""
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    ordered = sorted(classes, key=lambda c: c.label)
    values = img.data.astype(np.float64)
    scores = np.empty((len(ordered), *values.shape))
    for i, cls in enumerate(ordered):
        scores[i] = (
            np.log(cls.prior)
            - 0.5 * np.log(2.0 * np.pi * cls.variance)
            - (values - cls.mean) ** 2 / (2.0 * cls.variance)
        )
    best = scores.argmax(axis=0)
    labels = np.array([c.label for c in ordered], dtype=np.int32)
    return labels[best]
