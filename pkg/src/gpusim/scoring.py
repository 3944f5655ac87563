"""Forecast and regression error measures."""
from __future__ import annotations

import numpy as np


def smape(actual, forecast) -> float:
    """Symmetric mean absolute percentage error, in percent.

    Points where both values are zero are skipped.
    """
    a = np.asarray(actual, dtype=np.float64)
    f = np.asarray(forecast, dtype=np.float64)
    if a.shape != f.shape:
        raise ValueError("actual and forecast must have equal length")
    if a.size == 0:
        raise ValueError("smape of empty input")
    den = (np.abs(a) + np.abs(f)) / 2.0
    keep = den > 0
    if not keep.any():
        return 0.0
    return float(100.0 * np.mean(np.abs(f[keep] - a[keep]) / den[keep]))


def rmse(actual, forecast) -> float:
    a = np.asarray(actual, dtype=np.float64)
    f = np.asarray(forecast, dtype=np.float64)
    return float(np.sqrt(np.mean((a - f) ** 2)))
