"""Small numeric helpers shared across modules."""

from __future__ import annotations

import math

import numpy as np


def cumtrapz0(f: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Cumulative trapezoid of ``f`` over ``t``, anchored at 0."""
    out = np.empty_like(np.asarray(f, dtype=float))
    out[0] = 0.0
    np.cumsum(0.5 * np.diff(t) * (f[:-1] + f[1:]), out=out[1:])
    return out


def log_cumtrapz0(log_f: np.ndarray, t: np.ndarray) -> np.ndarray:
    """log of the cumulative trapezoid of exp(log_f); first entry is -inf.

    Overflow-safe route for integrands like exp(a*B(s) + c*s) whose linear
    values exceed double range on excursion-heavy paths.
    """
    dt = np.diff(t)
    with np.errstate(divide="ignore"):
        seg = np.log(0.5 * dt) + np.logaddexp(log_f[:-1], log_f[1:])
    out = np.empty(len(t))
    out[0] = -np.inf
    np.logaddexp.accumulate(seg, out=out[1:])
    return out


def first_crossing_time(times: np.ndarray, log_cum: np.ndarray, log_threshold: float) -> float:
    """First grid time with cumulative integral >= threshold, else inf."""
    idx = np.flatnonzero(log_cum >= log_threshold)
    if idx.size == 0:
        return float("inf")
    return float(times[idx[0]])


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("empty sample")
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def format_float(x: float) -> str:
    """Shortest round-trip decimal form; stable across runs for CSV diffing."""
    if isinstance(x, float):
        return repr(float(x))
    return str(x)
