"""Robust summary statistics used to compare noisy measurements."""

from __future__ import annotations

import math
from dataclasses import fields
from typing import Iterable, Sequence

import numpy as np

from .counters import NicCounters

NOTCH = 1.57


class EmptySample(ValueError):
    pass


class ZeroDenominator(ZeroDivisionError):
    pass


class TooFewSamples(ValueError):
    pass


class ZeroInterval(ValueError):
    pass


def _values(samples: Iterable[float]) -> np.ndarray:
    arr = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=float)
    if arr.size == 0:
        raise EmptySample("statistic of an empty sample")
    return arr


def quartiles(samples) -> tuple[float, float, float]:
    """(Q1, median, Q3) with linear interpolation between closest ranks."""
    arr = _values(samples)
    q1, med, q3 = np.quantile(arr, [0.25, 0.5, 0.75], method="linear")
    return float(q1), float(med), float(q3)


def iqr(samples) -> float:
    q1, _, q3 = quartiles(samples)
    return q3 - q1


def qcd(samples) -> float:
    q1, _, q3 = quartiles(samples)
    if q3 + q1 == 0:
        raise ZeroDenominator("Q3 + Q1 is zero")
    return (q3 - q1) / (q3 + q1)


def median_ci95(samples) -> tuple[float, float]:
    arr = _values(samples)
    if arr.size < 3:
        raise TooFewSamples("median interval needs at least 3 samples")
    q1, med, q3 = quartiles(arr)
    half = NOTCH * (q3 - q1) / math.sqrt(arr.size)
    return med - half, med + half


def describe(samples) -> dict[str, float]:
    """Summary row: q1, median, q3, iqr, qcd, ci_low, ci_high, mean."""
    arr = _values(samples)
    q1, med, q3 = quartiles(arr)
    if arr.size >= 3:
        lo, hi = median_ci95(arr)
    else:
        lo = hi = med
    return {
        "q1": q1,
        "median": med,
        "q3": q3,
        "iqr": q3 - q1,
        "qcd": (q3 - q1) / (q3 + q1) if q3 + q1 else 0.0,
        "ci_low": lo,
        "ci_high": hi,
        "mean": float(arr.mean()),
    }


def normalize_counters(delta: NicCounters, interval: float) -> dict[str, float]:
    """Per-cycle rates, so runs of different length compare fairly."""
    if interval <= 0:
        raise ZeroInterval("observation interval must be positive")
    return {f.name: getattr(delta, f.name) / interval for f in fields(delta)}


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.corrcoef(np.asarray(x, float), np.asarray(y, float))[0, 1])
