"""Plotting-position quantiles shared by the reference class and QRA code."""
from __future__ import annotations

import math

import numpy as np


def check_probability(p: float) -> float:
    p = float(p)
    if not (0.0 < p < 1.0) or math.isnan(p):
        raise ValueError(f"probability out of range: {p!r} (need 0 < p < 1)")
    return p


def hazen_quantile(sorted_values: np.ndarray, p: float) -> float:
    """Quantile of an ascending sample using Hazen plotting positions.

    The k-th order statistic (1-based) sits at probability ``(k - 0.5) / n``.
    Between adjacent positions the quantile is interpolated linearly; below
    the first and above the last position it is clamped to the minimum and
    maximum.

    Parameters
    ----------
    sorted_values : ndarray
        One-dimensional sample, already sorted ascending.
    p : float
        Probability in the open interval (0, 1).

    Returns
    -------
    float
    """
    p = check_probability(p)
    n = len(sorted_values)
    if n == 0:
        raise ValueError("empty sample")
    # position on the 1-based order-statistic axis
    h = n * p + 0.5
    if h <= 1.0:
        return float(sorted_values[0])
    if h >= n:
        return float(sorted_values[-1])
    k = int(math.floor(h))
    frac = h - k
    lo = float(sorted_values[k - 1])
    hi = float(sorted_values[k])
    if frac == 0.0 or lo == hi:
        return lo
    return lo + frac * (hi - lo)


def hazen_cdf(sorted_values: np.ndarray, x: float) -> float:
    """Inverse of :func:`hazen_quantile`: the plotting-position probability of ``x``.

    Piecewise linear through ``(x_k, (k - 0.5) / n)``; tied order statistics
    share the midpoint of their positions. Returns 0 below the minimum and 1
    above the maximum.
    """
    n = len(sorted_values)
    if n == 0:
        raise ValueError("empty sample")
    x = float(x)
    if x < sorted_values[0]:
        return 0.0
    if x > sorted_values[-1]:
        return 1.0
    left = int(np.searchsorted(sorted_values, x, side="left"))
    right = int(np.searchsorted(sorted_values, x, side="right"))
    if right > left:
        # x is an observed value occupying positions left+1 .. right
        return ((left + right) / 2.0) / n
    # strictly between sorted_values[left - 1] and sorted_values[left]
    lo = float(sorted_values[left - 1])
    hi = float(sorted_values[left])
    p_lo = (left - 0.5) / n
    return p_lo + (x - lo) / (hi - lo) / n
