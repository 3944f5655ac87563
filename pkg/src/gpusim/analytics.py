"""Characterization statistics of a job trace: utilization, duration CDFs,
GPU-demand and status breakdowns, per-user summaries."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd

from .timeline import busy_integral, minute_edges
from .trace import ClusterSpec, JobRecord, JobStatus

logger = logging.getLogger(__name__)


@dataclass
class CDFSeries:
    values: np.ndarray
    fractions: np.ndarray
    _raw: np.ndarray = field(repr=False, default=None)

    @property
    def mean(self) -> float:
        return float(self._raw.mean())

    @property
    def median(self) -> float:
        return float(np.median(self._raw))

    def at(self, x: float) -> float:
        """Fraction of samples <= x."""
        k = np.searchsorted(self.values, x, side="right")
        return 0.0 if k == 0 else float(self.fractions[k - 1])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"value": self.values, "fraction": self.fractions})


@dataclass
class UtilizationTimeline:
    start: int
    resolution: int
    fraction: np.ndarray  # busy GPUs / total GPUs per bin

    def times(self) -> np.ndarray:
        return self.start + self.resolution * np.arange(len(self.fraction))

    def aggregate(self, seconds: int) -> pd.Series:
        """Mean utilization per ``seconds``-long period (e.g. 3600 for hourly)."""
        key = (self.times() // seconds) * seconds
        return pd.Series(self.fraction).groupby(key).mean()

    def hour_of_day(self, tz_offset: int = 0) -> pd.Series:
        """Average utilization for each hour of the day in the trace's local time."""
        hour = ((self.times() + tz_offset) % 86400) // 3600
        return pd.Series(self.fraction).groupby(hour).mean()


def fill_times(jobs: Sequence[JobRecord], cluster: ClusterSpec | None) -> list[JobRecord]:
    """Give jobs lacking recorded start/end times the ones from a FIFO replay.

    Without a cluster such jobs are assumed to start at submission. GPU jobs
    the replay cannot place are dropped.
    """
    if all(j.end_time is not None for j in jobs):
        return list(jobs)
    if cluster is None:
        logger.warning("no cluster given; assuming jobs ran at submission")
        return [j if j.end_time is not None else
                replace(j, start_time=j.submit_time, end_time=j.submit_time + j.duration) for j in jobs]
    from .schedulers import FIFOPolicy
    from .sim import run_simulation
    by = run_simulation([j for j in jobs if j.end_time is None], cluster, FIFOPolicy()).by_id()
    out = []
    for j in jobs:
        if j.end_time is None:
            o = by.get(j.job_id)
            if o is None:
                if j.gpu_num > 0:
                    continue
                j = replace(j, start_time=j.submit_time, end_time=j.submit_time + j.duration)
            else:
                j = replace(j, start_time=o.start, end_time=o.end)
        out.append(j)
    return out


def _cdf(values) -> CDFSeries:
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("CDF of an empty set")
    uniq = np.unique(v)
    counts = np.searchsorted(v, uniq, side="right")
    return CDFSeries(uniq, counts / v.size, v)


def _select(jobs, kind):
    if kind == "gpu":
        return [j for j in jobs if j.gpu_num > 0]
    if kind == "cpu":
        return [j for j in jobs if j.gpu_num == 0]
    if kind == "all":
        return list(jobs)
    raise ValueError(f"kind must be gpu, cpu or all, not {kind!r}")


def duration_cdf(jobs: Sequence[JobRecord], kind: str = "gpu") -> CDFSeries:
    return _cdf([j.duration for j in _select(jobs, kind)])


def utilization_timeline(jobs: Sequence[JobRecord], cluster: ClusterSpec | int, resolution: int = 60,
                         t0: int | None = None, t1: int | None = None,
                         vc: str | None = None) -> UtilizationTimeline:
    """Busy-GPU fraction per bin from recorded (or replayed) start/end times.

    ``cluster`` is a ClusterSpec or a GPU count. Restricting to one ``vc``
    divides by that VC's GPUs at ``t0``.
    """
    ran = [j for j in jobs if j.gpu_num > 0 and j.start_time is not None and j.end_time is not None
           and (vc is None or j.vc == vc)]
    if isinstance(cluster, ClusterSpec):
        if vc is None:
            total = cluster.total_gpus
        else:
            total = cluster.vc_nodes_at(t0 or 0).get(vc, 0) * cluster.gpus_per_node
    else:
        total = int(cluster)
    if t0 is None:
        t0 = min((j.start_time for j in ran), default=0)
    if t1 is None:
        t1 = max((j.end_time for j in ran), default=t0 + resolution)
    edges = minute_edges(t0, t1, resolution)
    if ran:
        busy = busy_integral([j.start_time for j in ran], [j.end_time for j in ran],
                             [j.gpu_num for j in ran], edges) / resolution
    else:
        busy = np.zeros(len(edges) - 1)
    frac = busy / total if total else np.zeros_like(busy)
    return UtilizationTimeline(int(edges[0]), resolution, frac)


def gpu_demand_breakdown(jobs: Sequence[JobRecord]) -> pd.DataFrame:
    """Share of GPU jobs and of GPU time for each GPU demand."""
    gj = [j for j in jobs if j.gpu_num > 0]
    df = pd.DataFrame({"gpu_num": [j.gpu_num for j in gj],
                       "gpu_time": [j.duration * j.gpu_num for j in gj]})
    if df.empty:
        return pd.DataFrame(columns=["gpu_num", "jobs", "job_share", "gpu_time", "gpu_time_share"])
    g = df.groupby("gpu_num").agg(jobs=("gpu_num", "size"), gpu_time=("gpu_time", "sum")).reset_index()
    g["job_share"] = g["jobs"] / g["jobs"].sum()
    total = g["gpu_time"].sum()
    g["gpu_time_share"] = g["gpu_time"] / total if total else 0.0
    return g[["gpu_num", "jobs", "job_share", "gpu_time", "gpu_time_share"]]


def gpu_bucket(gpu_num: int) -> str:
    """Power-of-two demand bucket label: 0 (CPU), 1, 2, 4, ... rounding up."""
    if gpu_num <= 0:
        return "0"
    return str(1 << (int(gpu_num) - 1).bit_length())


def status_breakdown(jobs: Sequence[JobRecord], group: str | None = None,
                     weight: str = "count") -> pd.DataFrame:
    """Fraction of jobs (or of GPU time) per final status, optionally per group.

    ``group`` is None, ``"kind"`` (gpu/cpu) or ``"gpu_bucket"``.
    """
    statuses = [s.value for s in JobStatus]
    if group is None:
        keys = ["all"] * len(jobs)
    elif group == "kind":
        keys = ["gpu" if j.gpu_num > 0 else "cpu" for j in jobs]
    elif group == "gpu_bucket":
        keys = [gpu_bucket(j.gpu_num) for j in jobs]
    else:
        raise ValueError(f"unknown group {group!r}")
    w = [1 if weight == "count" else j.duration * j.gpu_num for j in jobs]
    df = pd.DataFrame({"group": keys, "status": [j.status.value for j in jobs], "w": w})
    if df.empty:
        return pd.DataFrame(columns=["group"] + statuses)
    t = df.pivot_table(index="group", columns="status", values="w", aggfunc="sum", fill_value=0)
    t = t.reindex(columns=statuses, fill_value=0)
    t = t.div(t.sum(axis=1).replace(0, 1), axis=0)
    if group == "gpu_bucket":
        t = t.loc[sorted(t.index, key=int)]
    return t.reset_index()


def unsuccessful_share(jobs: Sequence[JobRecord], kind: str = "gpu") -> float:
    sel = _select(jobs, kind)
    if not sel:
        return 0.0
    return sum(j.status is not JobStatus.COMPLETED for j in sel) / len(sel)


def user_stats(jobs: Sequence[JobRecord], queuing: dict[str, int] | None = None) -> pd.DataFrame:
    """Per-user GPU time, CPU time, total queuing delay and completion ratio, ranked by GPU time.

    Queuing comes from ``queuing`` (job id -> seconds, e.g. from a replay)
    or else from recorded start times.
    """
    rows = []
    for j in jobs:
        if queuing is not None:
            q = queuing.get(j.job_id, 0)
        else:
            q = j.start_time - j.submit_time if j.start_time is not None else 0
        rows.append((j.user, j.duration * j.gpu_num, j.duration * j.cpu_num, q,
                     j.status is JobStatus.COMPLETED, j.gpu_num > 0))
    df = pd.DataFrame(rows, columns=["user", "gpu_time", "cpu_time", "queuing", "completed", "is_gpu"])
    if df.empty:
        return pd.DataFrame(columns=["user", "jobs", "gpu_time", "cpu_time", "queuing",
                                     "completion_ratio", "gpu_time_share", "cpu_time_share", "queuing_share"])
    g = df.groupby("user").agg(jobs=("user", "size"), gpu_time=("gpu_time", "sum"),
                               cpu_time=("cpu_time", "sum"), queuing=("queuing", "sum"),
                               completion_ratio=("completed", "mean")).reset_index()
    for col in ("gpu_time", "cpu_time", "queuing"):
        tot = g[col].sum()
        g[f"{col}_share"] = g[col] / tot if tot else 0.0
    return g.sort_values(["gpu_time", "user"], ascending=[False, True]).reset_index(drop=True)


def top_share(stats: pd.DataFrame, column: str, top_fraction: float = 0.05) -> float:
    """Share of ``column`` held by the top ``top_fraction`` of users (at least one user)."""
    if stats.empty:
        return 0.0
    k = max(1, int(np.ceil(top_fraction * len(stats))))
    vals = np.sort(stats[column].to_numpy(dtype=float))[::-1]
    tot = vals.sum()
    return float(vals[:k].sum() / tot) if tot else 0.0


def summary(jobs: Sequence[JobRecord]) -> dict:
    gj = [j for j in jobs if j.gpu_num > 0]
    cj = [j for j in jobs if j.gpu_num == 0]
    out = {"jobs": len(jobs), "gpu_jobs": len(gj), "cpu_jobs": len(cj)}
    if gj:
        d = np.array([j.duration for j in gj], dtype=float)
        out.update(gpu_mean_duration=float(d.mean()), gpu_median_duration=float(np.median(d)),
                   gpu_avg_gpus=float(np.mean([j.gpu_num for j in gj])),
                   gpu_max_gpus=int(max(j.gpu_num for j in gj)),
                   gpu_unsuccessful_share=unsuccessful_share(jobs, "gpu"))
    if cj:
        out.update(cpu_mean_duration=float(np.mean([j.duration for j in cj])),
                   cpu_unsuccessful_share=unsuccessful_share(jobs, "cpu"))
    return out


def write_report(jobs: Sequence[JobRecord], cluster: ClusterSpec, outdir, svg: bool = True,
                 tz_offset: int = 0) -> list[str]:
    """Write the CSV report files (and SVG charts) into ``outdir``; return the file names."""
    from . import svgplot

    os.makedirs(outdir, exist_ok=True)
    written = []

    def save_csv(name, df):
        df.to_csv(os.path.join(outdir, name), index=False, lineterminator="\n", float_format="%.10g")
        written.append(name)

    ut = utilization_timeline(jobs, cluster)
    util = pd.DataFrame({"t": ut.times(), "utilization": ut.fraction})
    save_csv("utilization.csv", util)
    for kind in ("gpu", "cpu"):
        sel = _select(jobs, kind)
        df = duration_cdf(sel, kind).to_frame() if sel else pd.DataFrame(columns=["value", "fraction"])
        save_csv(f"cdf_duration_{kind}.csv", df)
    save_csv("demand_breakdown.csv", gpu_demand_breakdown(jobs))
    save_csv("status.csv", status_breakdown(jobs, "kind"))
    save_csv("users.csv", user_stats(jobs))
    if svg:
        hod = ut.hour_of_day(tz_offset)
        charts = {
            "utilization_hourly.svg": svgplot.line_chart(
                {"utilization": (hod.index.to_numpy(), hod.to_numpy())},
                "Average utilization by hour of day", "hour", "busy GPU fraction"),
        }
        for kind in ("gpu", "cpu"):
            sel = _select(jobs, kind)
            if sel:
                c = duration_cdf(sel, kind)
                charts[f"cdf_duration_{kind}.svg"] = svgplot.line_chart(
                    {kind: (np.log10(np.maximum(c.values, 1)), c.fractions)},
                    f"{kind.upper()} job duration CDF", "log10 duration (s)", "fraction", step=True)
        for name, text in charts.items():
            with open(os.path.join(outdir, name), "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
            written.append(name)
    return written
