"""Image quality indexes, contrast measures, and confusion statistics.

The universal quality index Q multiplies three factors per sliding block
(correlation, luminance closeness, contrast closeness) and averages the
block values; its range is [-1, 1] with 1 meaning identical images.  The
edge-preservation index beta is the correlation coefficient between the
discrete Laplacians of the two images (the printed variance-normalized form
cannot reach the stated [-1, 1] range, so the standard correlation is used).
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, asdict

import numpy as np
from scipy.ndimage import convolve

LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


class UndefinedMetricError(ValueError):
    """No block (or no variance) left to support the requested metric."""


def _as_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise ValueError("images must be 2-D with identical shapes")
    return x, y


def _block_mean(img: np.ndarray, block: int) -> np.ndarray:
    """Mean over every fully-inside block (stride 1)."""
    view = np.lib.stride_tricks.sliding_window_view(img, (block, block))
    return view.mean(axis=(2, 3))


def q_index_blocks(x, y, block: int = 8) -> tuple[np.ndarray, int]:
    """Per-block Q values (NaN on degenerate blocks) and the degenerate count.

    A block is degenerate when either image is constant on it or both block
    means are zero; such blocks are excluded from the average.
    """
    x, y = _as_pair(x, y)
    if x.shape[0] < block or x.shape[1] < block:
        raise ValueError(f"images smaller than the {block}x{block} block")
    count = block * block
    bessel = count / (count - 1.0)
    mx = _block_mean(x, block)
    mxx = _block_mean(x * x, block)
    my = _block_mean(y, block)
    myy = _block_mean(y * y, block)
    mxy = _block_mean(x * y, block)
    var_x = np.maximum(mxx - mx * mx, 0.0) * bessel
    var_y = np.maximum(myy - my * my, 0.0) * bessel
    cov = (mxy - mx * my) * bessel
    lum_den = mx * mx + my * my
    degenerate = (var_x <= 0.0) | (var_y <= 0.0) | (lum_den <= 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        sxsy = np.sqrt(var_x * var_y)
        q = (cov / sxsy) * (2.0 * mx * my / lum_den) * (2.0 * sxsy / (var_x + var_y))
    q = np.where(degenerate, np.nan, q)
    return q, int(degenerate.sum())


def q_index(x, y, block: int = 8) -> float:
    """Mean universal quality index over all non-degenerate sliding blocks."""
    q, _ = q_index_blocks(x, y, block)
    valid = q[~np.isnan(q)]
    if valid.size == 0:
        raise UndefinedMetricError("all blocks degenerate")
    return float(valid.mean())


def laplacian(img) -> np.ndarray:
    """3x3 discrete Laplacian with replicate borders."""
    img = np.asarray(img, dtype=np.float64)
    return convolve(img, LAPLACIAN_KERNEL, mode="nearest")


def beta_index(x, y) -> float:
    """Correlation coefficient between the Laplacians of the two images."""
    x, y = _as_pair(x, y)
    a = laplacian(x).ravel()
    b = laplacian(y).ravel()
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0.0:
        raise UndefinedMetricError("zero-variance Laplacian")
    return float((a * b).sum() / denom)


def contrast(mu1: float, sigma1: float, mu2: float, sigma2: float) -> float:
    """Between-region contrast |mu1 - mu2| / sqrt(sigma1^2 + sigma2^2)."""
    den = sigma1 * sigma1 + sigma2 * sigma2
    if den <= 0.0:
        raise ValueError("contrast undefined when both variances are zero")
    return float(abs(mu1 - mu2) / np.sqrt(den))


def relative_contrast_error(theoretical: float, observed: float) -> float:
    """|observed - theoretical| / theoretical (theoretical must be positive)."""
    if not theoretical > 0:
        raise ValueError("theoretical contrast must be positive")
    return float(abs(observed - theoretical) / theoretical)


def confusion_stats(predicted, truth, classes=None) -> dict[int, float]:
    """Per-class percentage of truth pixels classified correctly.

    Classes with no truth pixels are excluded (with a warning).
    """
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError("label maps must have identical shapes")
    if classes is None:
        classes = np.unique(truth).tolist()
    out: dict[int, float] = {}
    for cls in classes:
        total = int((truth == cls).sum())
        if total == 0:
            warnings.warn(f"class {cls} has no truth pixels; excluded")
            continue
        correct = int(((truth == cls) & (predicted == cls)).sum())
        out[int(cls)] = 100.0 * correct / total
    return out


@dataclass
class MetricsReport:
    """Quality summary for one filtered image."""

    q_index: float
    beta_index: float
    q_degenerate_blocks: int = 0
    class_accuracy: dict[int, float] | None = None
    contrast: float | None = None
    relative_contrast_error: float | None = None

    def to_json(self) -> str:
        doc = asdict(self)
        if doc["class_accuracy"] is not None:
            doc["class_accuracy"] = {str(k): v for k, v in doc["class_accuracy"].items()}
        return json.dumps(doc, indent=2)


def metrics_report(filtered, reference, block: int = 8) -> MetricsReport:
    """Q and beta of ``filtered`` against ``reference``."""
    q, skipped = q_index_blocks(filtered, reference, block)
    valid = q[~np.isnan(q)]
    if valid.size == 0:
        raise UndefinedMetricError("all blocks degenerate")
    return MetricsReport(
        q_index=float(valid.mean()),
        beta_index=beta_index(filtered, reference),
        q_degenerate_blocks=skipped,
    )


def format_table(headers: list[str], rows: list[list[str]]) -> str:
    """Aligned-column plain-text table."""
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    def fmt(cells):
        return "  ".join(c.rjust(w) for c, w in zip(cells, widths))
    lines = [fmt(headers)]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines) + "\n"
