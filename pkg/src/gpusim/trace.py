"""Job traces and cluster/VC configuration in a canonical schema.

Canonical job CSV::

    job_id,user,vc,job_name,gpu_num,cpu_num,status,submit_time,start_time,end_time,duration

All times are integer epoch seconds. ``start_time``/``end_time`` may be empty
for jobs that never ran in the source system; the simulator assigns its own.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

JOB_HEADER = [
    "job_id", "user", "vc", "job_name", "gpu_num", "cpu_num", "status",
    "submit_time", "start_time", "end_time", "duration",
]
VC_HEADER = ["effective_from", "vc", "node_count"]


class TraceFormatError(ValueError):
    """Raised for unrecoverable input problems (bad header, overlapping VC timeline)."""


class JobStatus(enum.Enum):
    COMPLETED = "COMPLETED"
    CANCELED = "CANCELED"
    FAILED = "FAILED"

    @classmethod
    def parse(cls, text: str) -> "JobStatus":
        key = text.strip().upper().replace(" ", "_")
        if key in _STATUS_ALIASES:
            return _STATUS_ALIASES[key]
        raise ValueError(f"unknown status {text!r}")


# Slurm end states; timeout and node failure are counted as failures.
_STATUS_ALIASES = {
    "COMPLETED": JobStatus.COMPLETED,
    "PASS": JobStatus.COMPLETED,
    "CANCELED": JobStatus.CANCELED,
    "CANCELLED": JobStatus.CANCELED,
    "KILLED": JobStatus.CANCELED,
    "FAILED": JobStatus.FAILED,
    "FAIL": JobStatus.FAILED,
    "TIMEOUT": JobStatus.FAILED,
    "NODE_FAIL": JobStatus.FAILED,
    "OUT_OF_MEMORY": JobStatus.FAILED,
}


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    user: str
    vc: str
    job_name: str
    gpu_num: int
    cpu_num: int
    submit_time: int
    start_time: int | None
    end_time: int | None
    duration: int
    status: JobStatus = JobStatus.COMPLETED

    @property
    def is_gpu(self) -> bool:
        return self.gpu_num > 0

    @property
    def gpu_time(self) -> int:
        return self.duration * self.gpu_num

    def problems(self) -> list[str]:
        """Return the list of violated invariants (empty when the record is valid)."""
        out = []
        if not self.job_id:
            out.append("empty job_id")
        if self.gpu_num < 0:
            out.append("negative gpu_num")
        if self.cpu_num < 0:
            out.append("negative cpu_num")
        if self.duration < 0:
            out.append("negative duration")
        if self.start_time is not None and self.end_time is not None:
            if self.end_time < self.start_time:
                out.append("negative duration")
            elif self.end_time - self.start_time != self.duration:
                out.append("duration does not match end_time - start_time")
        if self.start_time is not None and self.start_time < self.submit_time:
            out.append("start before submit")
        if self.end_time is not None and self.end_time < self.submit_time:
            out.append("end before submit")
        # dedupe while keeping order
        return list(dict.fromkeys(out))


@dataclass
class RejectedRow:
    line: int
    row: list[str]
    reason: str


@dataclass(frozen=True)
class VCConfig:
    vc: str
    node_count: int
    effective_from: int = 0


@dataclass
class ClusterSpec:
    name: str
    nodes: int
    gpus_per_node: int
    vcs: list[VCConfig] = field(default_factory=list)

    def __post_init__(self):
        if self.gpus_per_node <= 0:
            raise ValueError("gpus_per_node must be positive")
        if self.nodes < 0:
            raise ValueError("nodes must be non-negative")
        for t in sorted({c.effective_from for c in self.vcs}):
            used = sum(self.vc_nodes_at(t).values())
            if used > self.nodes:
                raise ValueError(
                    f"VCs use {used} nodes at t={t} but cluster has {self.nodes}")

    @property
    def total_gpus(self) -> int:
        return self.nodes * self.gpus_per_node

    def vc_nodes_at(self, t: int) -> dict[str, int]:
        """Node count per VC in effect at time ``t``.

        Before a VC's first configuration its earliest entry is used, so a
        single snapshot applies to the whole timeline.
        """
        timelines = vc_timelines(self.vcs)
        out = {}
        for vc, segs in timelines.items():
            current = segs[0]
            for seg in segs:
                if seg.effective_from <= t:
                    current = seg
            out[vc] = current.node_count
        return out

    def to_json(self) -> str:
        d = {"name": self.name, "nodes": self.nodes,
             "gpus_per_node": self.gpus_per_node,
             "vcs": [asdict(v) for v in self.vcs]}
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ClusterSpec":
        d = json.loads(text)
        vcs = [VCConfig(vc=str(v["vc"]), node_count=int(v["node_count"]),
                        effective_from=int(v.get("effective_from", 0)))
               for v in d.get("vcs", [])]
        return cls(name=d["name"], nodes=int(d["nodes"]),
                   gpus_per_node=int(d["gpus_per_node"]), vcs=vcs)

    @classmethod
    def load(cls, path) -> "ClusterSpec":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(f.read())


def _to_text(stream) -> IO[str]:
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(bytes(stream).decode("utf-8"), newline="")
    if isinstance(stream, str):
        return io.StringIO(stream, newline="")
    if isinstance(stream, io.TextIOBase):
        return stream
    return io.TextIOWrapper(stream, encoding="utf-8", newline="")


def _opt_int(s: str) -> int | None:
    s = s.strip()
    return None if s == "" else int(s)


def parse_job_log(stream) -> tuple[list[JobRecord], list[RejectedRow]]:
    """Parse a canonical job CSV.

    ``stream`` may be bytes, str, or a binary/text file object. Returns
    ``(jobs, rejects)``; rows that fail to parse or violate a JobRecord
    invariant go to ``rejects`` with a reason.
    """
    reader = csv.reader(_to_text(stream))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != JOB_HEADER:
        raise TraceFormatError(f"bad job header: {header!r}")

    jobs: list[JobRecord] = []
    rejects: list[RejectedRow] = []
    seen: set[str] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(JOB_HEADER):
            rejects.append(RejectedRow(lineno, row, f"expected {len(JOB_HEADER)} fields, got {len(row)}"))
            continue
        try:
            job = JobRecord(
                job_id=row[0], user=row[1], vc=row[2], job_name=row[3],
                gpu_num=int(row[4]), cpu_num=int(row[5]),
                status=JobStatus.parse(row[6]),
                submit_time=int(row[7]), start_time=_opt_int(row[8]),
                end_time=_opt_int(row[9]), duration=int(row[10]),
            )
        except ValueError as e:
            rejects.append(RejectedRow(lineno, row, f"unparsable field: {e}"))
            continue
        bad = job.problems()
        if not bad and job.job_id in seen:
            bad = ["duplicate job_id"]
        if bad:
            rejects.append(RejectedRow(lineno, row, "; ".join(bad)))
            continue
        seen.add(job.job_id)
        jobs.append(job)
    if rejects:
        logger.info("rejected %d of %d rows", len(rejects), len(rejects) + len(jobs))
    return jobs, rejects


def _fmt(v) -> str:
    return "" if v is None else str(v)


def serialize_jobs(jobs: Iterable[JobRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(JOB_HEADER)
    for j in jobs:
        w.writerow([j.job_id, j.user, j.vc, j.job_name, j.gpu_num, j.cpu_num,
                    j.status.value, j.submit_time, _fmt(j.start_time),
                    _fmt(j.end_time), j.duration])
    return buf.getvalue()


def load_jobs(path) -> list[JobRecord]:
    with open(path, "rb") as f:
        jobs, rejects = parse_job_log(f)
    for r in rejects[:10]:
        logger.warning("%s:%d rejected: %s", path, r.line, r.reason)
    return jobs


def parse_vc_config(stream) -> dict[str, list[VCConfig]]:
    """Parse ``effective_from,vc,node_count`` rows into per-VC timelines."""
    reader = csv.reader(_to_text(stream))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != VC_HEADER:
        raise TraceFormatError(f"bad VC header: {header!r}")
    configs = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            cfg = VCConfig(vc=row[1], node_count=int(row[2]), effective_from=int(row[0]))
        except (ValueError, IndexError) as e:
            raise TraceFormatError(f"line {lineno}: {e}") from e
        if cfg.node_count < 0:
            raise TraceFormatError(f"line {lineno}: negative node_count")
        configs.append(cfg)
    return vc_timelines(configs)


def vc_timelines(configs: Iterable[VCConfig]) -> dict[str, list[VCConfig]]:
    """Group configurations per VC, sorted by ``effective_from``.

    Each entry holds from its ``effective_from`` until the next entry of the
    same VC. Two entries with the same start overlap and are rejected.
    """
    out: dict[str, list[VCConfig]] = {}
    for c in configs:
        out.setdefault(c.vc, []).append(c)
    for vc, segs in out.items():
        segs.sort(key=lambda c: c.effective_from)
        for a, b in zip(segs, segs[1:]):
            if a.effective_from == b.effective_from:
                raise TraceFormatError(f"overlapping configurations for {vc} at {a.effective_from}")
    return dict(sorted(out.items()))


def serialize_vc_config(timelines: dict[str, list[VCConfig]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VC_HEADER)
    rows = sorted((c.effective_from, c.vc, c.node_count)
                  for segs in timelines.values() for c in segs)
    w.writerows(rows)
    return buf.getvalue()


@dataclass
class ValidationReport:
    total: int = 0
    gpu_jobs: int = 0
    cpu_jobs: int = 0
    status_counts: dict[str, int] = field(default_factory=dict)
    exceeds_cluster: list[str] = field(default_factory=list)
    exceeds_vc: list[str] = field(default_factory=list)
    unknown_vc: list[str] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        return {"gpu": self.gpu_jobs, "cpu": self.cpu_jobs}


def validate_trace(jobs: Sequence[JobRecord], cluster: ClusterSpec | None = None) -> ValidationReport:
    """Summarize a trace and flag jobs whose demand cannot fit the cluster or their VC."""
    rep = ValidationReport(status_counts={s.value: 0 for s in JobStatus})
    vc_gpus = {}
    if cluster is not None and cluster.vcs:
        vc_gpus = {vc: max(c.node_count for c in segs) * cluster.gpus_per_node
                   for vc, segs in vc_timelines(cluster.vcs).items()}
    for j in jobs:
        rep.total += 1
        if j.is_gpu:
            rep.gpu_jobs += 1
        else:
            rep.cpu_jobs += 1
        rep.status_counts[j.status.value] += 1
        if cluster is None:
            continue
        if j.gpu_num > cluster.total_gpus:
            rep.exceeds_cluster.append(j.job_id)
        if vc_gpus:
            if j.vc not in vc_gpus:
                rep.unknown_vc.append(j.job_id)
            elif j.gpu_num > vc_gpus[j.vc]:
                rep.exceeds_vc.append(j.job_id)
    return rep


@dataclass
class SynthParams:
    """Parameters of the synthetic trace generator.

    ``duration_fixed`` overrides the log-normal duration model with a point
    mass. Each (user, name template) pair gets its own log-normal location so
    job names carry signal about durations.
    """
    job_count: int = 1000
    seed: int = 0
    start_time: int = 1_598_918_400  # 2020-09-01 00:00 UTC
    span_days: float = 7.0
    hourly_weights: Sequence[float] = tuple([1.0] * 24)
    gpu_dist: dict[int, float] = field(default_factory=lambda: {1: 0.55, 2: 0.15, 4: 0.12, 8: 0.13, 16: 0.05})
    cpu_job_fraction: float = 0.0
    duration_mu: float = 6.0
    duration_sigma: float = 1.5
    duration_fixed: int | None = None
    max_duration: int = 14 * 86400
    users: int = 20
    names_per_user: int = 4
    vcs: Sequence[str] = ("vc0", "vc1")
    status_probs: dict[str, float] = field(
        default_factory=lambda: {"COMPLETED": 0.65, "CANCELED": 0.2, "FAILED": 0.15})
    name_effect_sigma: float = 1.0

    def check(self):
        if self.job_count < 0:
            raise ValueError("job_count must be non-negative")
        w = np.asarray(self.hourly_weights, dtype=float)
        if w.shape != (24,) or (w < 0).any() or w.sum() <= 0:
            raise ValueError("hourly_weights must be 24 non-negative weights with positive sum")
        for name, dist in (("gpu_dist", self.gpu_dist), ("status_probs", self.status_probs)):
            p = np.asarray(list(dist.values()), dtype=float)
            if len(p) == 0 or (p < 0).any() or not np.isclose(p.sum(), 1.0):
                raise ValueError(f"{name} probabilities must be non-negative and sum to 1")
        for g in self.gpu_dist:
            if g < 1 or g & (g - 1):
                raise ValueError(f"GPU demand {g} is not a power of two")
        if not 0 <= self.cpu_job_fraction <= 1:
            raise ValueError("cpu_job_fraction must lie in [0, 1]")
        if self.duration_fixed is None and self.duration_sigma < 0:
            raise ValueError("duration_sigma must be non-negative")
        if self.duration_fixed is not None and self.duration_fixed < 0:
            raise ValueError("duration_fixed must be non-negative")
        if self.users < 1 or self.names_per_user < 1 or not self.vcs:
            raise ValueError("user/name/vc pools must be non-empty")
        if self.span_days <= 0:
            raise ValueError("span_days must be positive")


_NAME_STEMS = ["train", "eval", "test", "finetune", "pretrain", "infer", "debug", "preprocess"]
_NAME_MODELS = ["resnet50", "bert_base", "yolo", "vit", "gpt_small", "mask_rcnn", "lstm", "unet"]


def synth_trace(params: SynthParams) -> list[JobRecord]:
    """Generate a deterministic synthetic trace (a pure function of ``params``).

    Jobs carry no start/end times; the simulator assigns them.
    """
    params.check()
    rng = np.random.default_rng(params.seed)
    n = params.job_count

    # arrivals: uniform day, hour from weights, uniform second within the hour
    w = np.asarray(params.hourly_weights, dtype=float)
    days = np.floor(rng.random(n) * params.span_days)
    hours = rng.choice(24, size=n, p=w / w.sum())
    secs = rng.integers(0, 3600, size=n)
    submit = params.start_time + (days * 86400).astype(np.int64) + hours * 3600 + secs
    submit = np.minimum(submit, params.start_time + int(params.span_days * 86400) - 1)
    submit.sort()

    gpus = np.array(list(params.gpu_dist.keys()))
    gpu_p = np.array(list(params.gpu_dist.values()), dtype=float)
    gpu_num = rng.choice(gpus, size=n, p=gpu_p / gpu_p.sum())
    is_cpu = rng.random(n) < params.cpu_job_fraction
    gpu_num = np.where(is_cpu, 0, gpu_num)

    # users favour a home VC; names are per-user templates with run suffixes
    user_idx = rng.integers(0, params.users, size=n)
    user_vc = rng.integers(0, len(params.vcs), size=params.users)
    other_vc = rng.integers(0, len(params.vcs), size=n)
    vc_idx = np.where(rng.random(n) < 0.9, user_vc[user_idx], other_vc)
    name_idx = rng.integers(0, params.names_per_user, size=n)
    name_shift = rng.normal(0.0, params.name_effect_sigma, size=(params.users, params.names_per_user))
    templates = [[f"{_NAME_STEMS[(u + k) % len(_NAME_STEMS)]}_{_NAME_MODELS[(3 * u + k) % len(_NAME_MODELS)]}_u{u}k{k}"
                  for k in range(params.names_per_user)] for u in range(params.users)]
    run_no = rng.integers(0, 100, size=n)

    if params.duration_fixed is not None:
        dur = np.full(n, params.duration_fixed, dtype=np.int64)
    else:
        mu = params.duration_mu + name_shift[user_idx, name_idx]
        dur = np.exp(mu + params.duration_sigma * rng.standard_normal(n))
        dur = np.clip(np.round(dur), 1, params.max_duration).astype(np.int64)

    statuses = list(params.status_probs.keys())
    st_p = np.array(list(params.status_probs.values()), dtype=float)
    st_idx = rng.choice(len(statuses), size=n, p=st_p / st_p.sum())
    cpu_per_gpu = 6

    jobs = []
    for i in range(n):
        g = int(gpu_num[i])
        jobs.append(JobRecord(
            job_id=f"j{i:07d}",
            user=f"u{int(user_idx[i]):03d}",
            vc=params.vcs[int(vc_idx[i])],
            job_name=f"{templates[user_idx[i]][name_idx[i]]}_r{int(run_no[i])}",
            gpu_num=g,
            cpu_num=g * cpu_per_gpu if g else int(1 + rng.integers(0, 8)),
            submit_time=int(submit[i]),
            start_time=None,
            end_time=None,
            duration=int(dur[i]),
            status=JobStatus.parse(statuses[st_idx[i]]),
        ))
    return jobs
