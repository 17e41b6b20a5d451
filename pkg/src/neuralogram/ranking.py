"""Rank statistics used by evaluation and the probes: tie-averaged
ranks, Spearman rank correlation, and simple least-squares fit quality."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def tie_average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their group's average rank."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ShapeError("ranks are defined for 1-D arrays")
    _, inverse, counts = np.unique(values, return_inverse=True,
                                   return_counts=True)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    avg = starts + (counts + 1) / 2.0
    return avg[inverse]


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Spearman rank correlation (Pearson correlation of tied ranks).

    Returns 0.0 when either input is constant (no ordering information).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError("spearman needs two equal-length 1-D arrays")
    if x.size < 2:
        raise ShapeError("spearman needs at least two points")
    rx = tie_average_ranks(x)
    ry = tie_average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sx = float(np.dot(dx, dx))
    sy = float(np.dot(dy, dy))
    if sx == 0.0 or sy == 0.0:
        return 0.0
    # Sum (not mean/std) form: exact +/-1.0 when the rankings agree,
    # because numerator and denominator then share every rounding step.
    r = float(np.dot(dx, dy)) / float(np.sqrt(sx * sy))
    return float(min(1.0, max(-1.0, r)))


def linear_fit_r2(x: np.ndarray, y: np.ndarray) -> float:
    """R-squared of the least-squares line y = a*x + b.

    Returns 1.0 when y is constant (the line fits exactly).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ShapeError("r2 needs two equal-length 1-D arrays of >= 2 points")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0
    coeffs = np.polyfit(x, y, 1)
    resid = y - np.polyval(coeffs, x)
    return float(1.0 - np.sum(resid ** 2) / ss_tot)
