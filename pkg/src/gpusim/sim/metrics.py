"""Scheduling metrics: JCT, queuing delay, queued-job counts, utilization."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..timeline import busy_integral, minute_edges
from .engine import SimResult

# Duration buckets used for per-group queuing comparisons.
SHORT_MAX = 15 * 60
MIDDLE_MAX = 6 * 3600


@dataclass
class GroupMetrics:
    jobs: int
    avg_jct: float
    avg_queuing: float
    avg_duration: float
    queued_job_count: int
    # integer totals, for which jct = queuing + duration holds exactly
    total_jct: int = 0
    total_queuing: int = 0
    total_duration: int = 0


@dataclass
class MetricsSummary:
    policy: str
    jobs: int
    avg_jct: float
    avg_queuing: float
    avg_duration: float
    queued_job_count: int
    queue_threshold: int
    unschedulable: int
    total_jct: int = 0
    total_queuing: int = 0
    total_duration: int = 0
    per_vc: dict[str, GroupMetrics] = field(default_factory=dict)
    utilization: np.ndarray | None = None  # busy fraction per minute
    utilization_start: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("utilization")
        d["avg_utilization"] = float(self.utilization.mean()) if self.utilization is not None and self.utilization.size else 0.0
        return d


def _group(outcomes, threshold) -> GroupMetrics:
    if not outcomes:
        return GroupMetrics(0, 0.0, 0.0, 0.0, 0)
    jct = np.array([o.jct for o in outcomes], dtype=np.int64)
    q = np.array([o.queuing for o in outcomes], dtype=np.int64)
    d = np.array([o.duration for o in outcomes], dtype=np.int64)
    n = len(outcomes)
    sj, sq, sd = int(jct.sum()), int(q.sum()), int(d.sum())
    return GroupMetrics(n, sj / n, sq / n, sd / n, int((q > threshold).sum()), sj, sq, sd)


def compute_metrics(result: SimResult, queue_threshold: int = 0, resolution: int = 60) -> MetricsSummary:
    """Summarize a run: averages over replayed jobs plus per-VC breakdowns.

    A job counts as queued when its queuing delay exceeds ``queue_threshold``
    seconds.
    """
    outs = result.outcomes
    g = _group(outs, queue_threshold)
    per_vc = {}
    for vc in sorted({o.vc for o in outs}):
        per_vc[vc] = _group([o for o in outs if o.vc == vc], queue_threshold)
    util, t0 = utilization_timeline(result, resolution)
    return MetricsSummary(
        policy=result.policy, jobs=g.jobs, avg_jct=g.avg_jct, avg_queuing=g.avg_queuing,
        avg_duration=g.avg_duration, queued_job_count=g.queued_job_count,
        queue_threshold=queue_threshold, unschedulable=len(result.unschedulable),
        total_jct=g.total_jct, total_queuing=g.total_queuing, total_duration=g.total_duration,
        per_vc=per_vc, utilization=util, utilization_start=t0,
    )


def busy_gpu_timeline(result: SimResult, resolution: int = 60) -> tuple[np.ndarray, int]:
    """Average busy GPUs per bin and the start time of the first bin."""
    segs = [(s.start, s.end, o.gpu_num) for o in result.outcomes for s in o.segments]
    if not segs:
        return np.zeros(0), 0
    st, en, w = (np.array(x) for x in zip(*segs))
    edges = minute_edges(int(st.min()), int(en.max()), resolution)
    busy = busy_integral(st, en, w, edges) / resolution
    return busy, int(edges[0])


def utilization_timeline(result: SimResult, resolution: int = 60) -> tuple[np.ndarray, int]:
    busy, t0 = busy_gpu_timeline(result, resolution)
    total = result.total_gpus
    return (busy / total if total else busy), t0


def duration_group(duration: int) -> str:
    if duration < SHORT_MAX:
        return "short"
    if duration <= MIDDLE_MAX:
        return "middle"
    return "long"


def queuing_by_duration_group(result: SimResult) -> dict[str, float]:
    """Average queuing delay per duration bucket (short < 15 min, middle up to 6 h, long beyond)."""
    groups: dict[str, list[int]] = {"short": [], "middle": [], "long": []}
    for o in result.outcomes:
        groups[duration_group(o.duration)].append(o.queuing)
    return {k: (float(np.mean(v)) if v else 0.0) for k, v in groups.items()}


def queuing_ratio_by_group(baseline: SimResult, other: SimResult) -> dict[str, float]:
    """Baseline/other average queuing per duration bucket (higher favours ``other``)."""
    a = queuing_by_duration_group(baseline)
    b = queuing_by_duration_group(other)
    return {k: (a[k] / b[k] if b[k] > 0 else float("inf") if a[k] > 0 else 1.0) for k in a}


def jobs_csv(result: SimResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["job_id", "submit", "start", "end", "gpu_num", "vc"])
    for o in result.outcomes:
        w.writerow([o.job_id, o.submit, o.start, o.end, o.gpu_num, o.vc])
    return buf.getvalue()


def utilization_csv(result: SimResult, resolution: int = 60) -> str:
    busy, t0 = busy_gpu_timeline(result, resolution)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "busy_gpus", "total_gpus"])
    for i, b in enumerate(busy):
        w.writerow([t0 + i * resolution, f"{b:.6f}", result.total_gpus])
    return buf.getvalue()


def summary_json(summary: MetricsSummary) -> str:
    return json.dumps(summary.to_dict(), indent=2, sort_keys=True)
