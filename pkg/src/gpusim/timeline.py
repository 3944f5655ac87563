"""Exact busy-resource integrals over fixed-width time bins."""
from __future__ import annotations

import numpy as np


def busy_integral(starts, ends, weights, edges) -> np.ndarray:
    """Integral of the busy weight over each bin ``[edges[i], edges[i+1])``.

    The busy weight at time t is the sum of ``weights[k]`` over intervals with
    ``starts[k] <= t < ends[k]``. Cumulative busy-time is piecewise linear, so
    it is evaluated exactly at the bin edges and differenced.
    """
    starts = np.asarray(starts, dtype=np.float64)
    ends = np.asarray(ends, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.float64)
    if starts.size == 0:
        return np.zeros(max(edges.size - 1, 0))

    def cumulative(points, at):
        order = np.argsort(points, kind="stable")
        p = points[order]
        ww = w[order]
        cw = np.concatenate([[0.0], np.cumsum(ww)])
        cpw = np.concatenate([[0.0], np.cumsum(ww * p)])
        k = np.searchsorted(p, at, side="right")
        return at * cw[k] - cpw[k]

    total = cumulative(starts, edges) - cumulative(ends, edges)
    return np.diff(total)


def minute_edges(t0: int, t1: int, resolution: int = 60) -> np.ndarray:
    """Bin edges aligned to multiples of ``resolution`` covering ``[t0, t1)``."""
    lo = (t0 // resolution) * resolution
    hi = -(-t1 // resolution) * resolution
    if hi <= lo:
        hi = lo + resolution
    return np.arange(lo, hi + resolution, resolution, dtype=np.int64)
