"""Small statistical helpers shared by the experiment modules.

All means go through :func:`math.fsum`, which is exactly rounded and therefore
independent of summation order; serial and parallel runs agree bit for bit.
"""
from __future__ import annotations

import math
from typing import Iterable

import numpy as np

Z99 = 2.5758293035489004  # two-sided 99% normal quantile


def mean(values: Iterable[float]) -> float:
    vals = [float(v) for v in values]
    if not vals:
        return math.nan
    return math.fsum(vals) / len(vals)


def variance(values: Iterable[float]) -> float:
    """Unbiased sample variance, two-pass with exact sums."""
    vals = [float(v) for v in values]
    if len(vals) < 2:
        return 0.0
    m = math.fsum(vals) / len(vals)
    return math.fsum((v - m) ** 2 for v in vals) / (len(vals) - 1)


def variance_stderr(values) -> float:
    """Standard error of the sample variance, sqrt((m4 - s^4)/N)."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        return 0.0
    m = mean(x)
    m2 = math.fsum((x - m) ** 2) / n
    m4 = math.fsum((x - m) ** 4) / n
    return math.sqrt(max(m4 - m2 * m2, 0.0) / n)


def binomial_sigma(p: float, n: int) -> float:
    """One standard deviation of a frequency estimate with true rate ``p``."""
    p = min(max(p, 0.0), 1.0)
    return math.sqrt(p * (1.0 - p) / n)


def wald_halfwidth(p_hat: float, n: int, z: float = Z99) -> float:
    """Normal-approximation confidence halfwidth (99% by default)."""
    return z * binomial_sigma(p_hat, n)


def quantiles(values, qs=(0.5, 0.95)) -> list[float]:
    x = np.sort(np.asarray(values, dtype=float))
    return [float(np.quantile(x, q)) for q in qs]
