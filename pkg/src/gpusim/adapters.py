"""Converters from public trace formats into the canonical schema.

Helios ``cluster_log.csv`` rows become JobRecords; Helios ``vc_config.csv``
becomes VCConfig entries; Philly per-minute GPU utilization exports become
a NodeSeries. Column names are matched case-insensitively and a few common
aliases are accepted.
"""
from __future__ import annotations

import logging
from typing import Iterable

import numpy as np
import pandas as pd

from .ces.control import NodeSeries
from .trace import JobRecord, JobStatus, RejectedRow, TraceFormatError, VCConfig

logger = logging.getLogger(__name__)

_HELIOS_ALIASES = {
    "job_id": ("job_id", "jobid", "id"),
    "user": ("user", "user_id", "username"),
    "vc": ("vc", "virtual_cluster"),
    "job_name": ("jobname", "job_name", "name"),
    "gpu_num": ("gpu_num", "gpus", "num_gpus"),
    "cpu_num": ("cpu_num", "cpus", "num_cpus"),
    "status": ("state", "status"),
    "submit_time": ("submit_time", "submit"),
    "start_time": ("start_time", "start"),
    "end_time": ("end_time", "end"),
    "duration": ("duration", "runtime"),
}


def _resolve(columns: Iterable[str], aliases: dict, required: Iterable[str]) -> dict[str, str]:
    lower = {c.strip().lower(): c for c in columns}
    out = {}
    for key, names in aliases.items():
        for n in names:
            if n in lower:
                out[key] = lower[n]
                break
    missing = [k for k in required if k not in out]
    if missing:
        raise TraceFormatError(f"missing columns: {', '.join(missing)}")
    return out


def _epoch(col: pd.Series, tz_offset: int) -> pd.Series:
    """Epoch seconds from numbers or naive local datetimes (local = UTC + tz_offset)."""
    num = pd.to_numeric(col, errors="coerce")
    if num.notna().sum() >= col.notna().sum() and col.notna().any():
        return num.round().astype("Int64")
    dt = pd.to_datetime(col, errors="coerce")
    if getattr(dt.dt, "tz", None) is not None:
        dt = dt.dt.tz_convert("UTC").dt.tz_localize(None)
        tz_offset = 0
    secs = (dt - pd.Timestamp(0)) // pd.Timedelta(seconds=1) - tz_offset
    return secs.astype("Int64")


def read_helios_jobs(path_or_buf, tz_offset: int = 0) -> tuple[list[JobRecord], list[RejectedRow]]:
    """Read a Helios ``cluster_log.csv``.

    Naive timestamps are taken as local time ``tz_offset`` seconds ahead of
    UTC. The duration column wins when present; otherwise end - start. Rows
    with unknown status or violated invariants are returned as rejects.
    """
    df = pd.read_csv(path_or_buf, dtype=str, keep_default_na=False, na_values=[""])
    cols = _resolve(df.columns, _HELIOS_ALIASES, ["job_id", "gpu_num", "submit_time", "status"])
    get = lambda k, default=None: df[cols[k]] if k in cols else pd.Series([default] * len(df))  # noqa: E731
    submit = _epoch(get("submit_time"), tz_offset)
    start = _epoch(get("start_time"), tz_offset) if "start_time" in cols else pd.Series([pd.NA] * len(df))
    end = _epoch(get("end_time"), tz_offset) if "end_time" in cols else pd.Series([pd.NA] * len(df))
    dur = pd.to_numeric(get("duration"), errors="coerce") if "duration" in cols else end - start
    gpu = pd.to_numeric(get("gpu_num", 0), errors="coerce")
    cpu = pd.to_numeric(get("cpu_num", 0), errors="coerce").fillna(0)

    jobs, rejects, seen = [], [], set()
    for i in range(len(df)):
        line = i + 2
        raw = [str(x) for x in df.iloc[i].tolist()]
        try:
            status = JobStatus.parse(str(df[cols["status"]].iat[i]))
        except ValueError as e:
            rejects.append(RejectedRow(line, raw, str(e)))
            continue
        if pd.isna(submit.iat[i]) or pd.isna(gpu.iat[i]) or pd.isna(dur.iat[i]):
            rejects.append(RejectedRow(line, raw, "missing submit time, gpu count or duration"))
            continue
        jid = str(df[cols["job_id"]].iat[i])
        if jid in seen:
            rejects.append(RejectedRow(line, raw, "duplicate job_id"))
            continue
        st = None if pd.isna(start.iat[i]) else int(start.iat[i])
        en = None if pd.isna(end.iat[i]) else int(end.iat[i])
        d = int(round(float(dur.iat[i])))
        if st is not None and en is not None and en - st != d:
            # recorded duration is authoritative; keep the end consistent with it
            en = st + d
        rec = JobRecord(
            job_id=jid,
            user=str(get("user", "").iat[i] or ""),
            vc=str(get("vc", "").iat[i] or ""),
            job_name=str(get("job_name", "").iat[i] or ""),
            gpu_num=int(gpu.iat[i]), cpu_num=int(cpu.iat[i]),
            submit_time=int(submit.iat[i]), start_time=st, end_time=en,
            duration=d, status=status)
        probs = rec.problems()
        if probs:
            rejects.append(RejectedRow(line, raw, "; ".join(probs)))
            continue
        seen.add(jid)
        jobs.append(rec)
    if rejects:
        logger.info("rejected %d of %d Helios rows", len(rejects), len(df))
    return jobs, rejects


def read_helios_vc_config(path_or_buf, effective_from: int = 0) -> list[VCConfig]:
    """Read a Helios ``vc_config.csv`` (one row per VC with its node count)."""
    df = pd.read_csv(path_or_buf, dtype=str)
    cols = _resolve(df.columns, {"vc": ("vc", "virtual_cluster"),
                                 "nodes": ("num", "node_num", "nodes", "node_count")},
                    ["vc", "nodes"])
    return [VCConfig(str(v), int(float(n)), effective_from)
            for v, n in zip(df[cols["vc"]], df[cols["nodes"]])]


def philly_node_series(path_or_buf, busy_threshold: float = 0.0, total_nodes: int | None = None) -> NodeSeries:
    """Node series from a Philly per-minute GPU utilization export.

    Expects a ``time`` column, a ``machine_id`` column and one or more
    per-GPU utilization columns (names starting with ``gpu``). A node counts
    as running in a minute when any of its GPUs exceeds ``busy_threshold``
    percent. Minutes missing from the export are filled with zero running
    nodes.
    """
    df = pd.read_csv(path_or_buf)
    cols = _resolve(df.columns, {"time": ("time", "timestamp", "minute"),
                                 "node": ("machine_id", "machine", "node", "node_id")},
                    ["time", "node"])
    gpu_cols = [c for c in df.columns if c.strip().lower().startswith("gpu")]
    if not gpu_cols:
        raise TraceFormatError("no per-GPU utilization columns")
    t = _epoch(df[cols["time"]], 0).astype("int64")
    minute = (t // 60) * 60
    util = df[gpu_cols].apply(pd.to_numeric, errors="coerce").fillna(0.0)
    busy = (util > busy_threshold).any(axis=1)
    nodes = df[cols["node"]]
    per_min = pd.DataFrame({"minute": minute, "node": nodes, "busy": busy})
    running = per_min[per_min["busy"]].groupby("minute")["node"].nunique()
    m0, m1 = int(minute.min()), int(minute.max())
    idx = np.arange(m0, m1 + 60, 60)
    running = running.reindex(idx, fill_value=0).to_numpy(dtype=np.int64)
    n_total = total_nodes if total_nodes is not None else int(nodes.nunique())
    return NodeSeries(m0, np.full(len(idx), n_total), np.minimum(running, n_total))


def merge_attempts(jobs: list[JobRecord]) -> list[JobRecord]:
    """Collapse per-attempt rows (ids ``<job>#<k>``) into one logical job each.

    The logical job keeps the first attempt's submit and start, the last
    attempt's end and status, and the summed attempt durations. Rows without
    the ``#`` suffix pass through unchanged.
    """
    groups: dict[str, list[JobRecord]] = {}
    order = []
    for j in jobs:
        base = j.job_id.split("#", 1)[0]
        if base not in groups:
            groups[base] = []
            order.append(base)
        groups[base].append(j)
    out = []
    for base in order:
        g = sorted(groups[base], key=lambda r: (r.submit_time, r.job_id))
        if len(g) == 1 and g[0].job_id == base:
            out.append(g[0])
            continue
        first, last = g[0], g[-1]
        out.append(JobRecord(
            job_id=base, user=first.user, vc=first.vc, job_name=first.job_name,
            gpu_num=max(r.gpu_num for r in g), cpu_num=max(r.cpu_num for r in g),
            submit_time=first.submit_time, start_time=None, end_time=None,
            duration=sum(r.duration for r in g), status=last.status))
    return out
