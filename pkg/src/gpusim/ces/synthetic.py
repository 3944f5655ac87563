"""Synthetic running-node series with daily and weekly seasonality."""
from __future__ import annotations

import numpy as np

from .control import NodeSeries


def synthetic_node_series(days: float, total: int, base: float, amplitude: float, seed: int = 0,
                          start: int = 1_598_918_400, weekend_dip: float = 0.0, noise: float = 1.0,
                          hold_minutes: int = 10, peak_hour: float = 15.0, jobs_per_minute: float = 2.0) -> NodeSeries:
    """Running nodes per minute: a daily cosine peaking at ``peak_hour`` plus AR(1) noise.

    Noise is drawn every ``hold_minutes`` and held in between, so the series
    changes in steps the way node occupancy does. ``weekend_dip`` nodes are
    subtracted on Saturdays and Sundays. Job starts per minute are Poisson.
    """
    rng = np.random.default_rng(seed)
    n = int(days * 1440)
    t = start + 60 * np.arange(n)
    hour = (t % 86400) / 3600.0
    dow = (t // 86400 + 3) % 7
    level = base + amplitude * np.cos(2 * np.pi * (hour - peak_hour) / 24.0)
    level = level - weekend_dip * (dow >= 5)
    steps = -(-n // hold_minutes)
    eps = np.empty(steps)
    e = 0.0
    for k in range(steps):
        e = 0.9 * e + noise * rng.standard_normal()
        eps[k] = e
    level = level + np.repeat(eps, hold_minutes)[:n]
    running = np.clip(np.rint(level), 0, total).astype(np.int64)
    starts = rng.poisson(jobs_per_minute, n)
    return NodeSeries(start, np.full(n, total), running, starts)
