"""Completed-job history and the rolling duration estimator."""
from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass

from ..trace import JobRecord
from .levenshtein import NameClusterIndex

DEFAULT_PRIOR = 600.0


class _Mean:
    __slots__ = ("total", "count")

    def __init__(self):
        self.total = 0.0
        self.count = 0

    def add(self, x):
        self.total += x
        self.count += 1

    @property
    def value(self):
        return self.total / self.count if self.count else None


@dataclass(frozen=True)
class _Done:
    end_time: int
    duration: int
    gpu_num: int


class HistoryStore:
    """Append-only store of finished jobs, indexed by user, GPU demand and name cluster.

    Jobs become visible only once the store has been advanced past their end
    time, so estimates made at time ``t`` never see jobs finishing after
    ``t``. Queries must come in non-decreasing time order.
    """

    def __init__(self, tau: float = 0.3):
        self.tau = tau
        self._future: list[tuple[int, int, JobRecord]] = []
        self._seq = 0
        self.now: int | None = None
        self.size = 0
        self.global_mean = _Mean()
        self.gpu_mean: dict[int, _Mean] = defaultdict(_Mean)
        self.user_mean: dict[str, _Mean] = defaultdict(_Mean)
        self.user_gpu_mean: dict[tuple[str, int], _Mean] = defaultdict(_Mean)
        self.user_names: dict[str, NameClusterIndex] = {}
        self.matched: dict[tuple[str, int], list[_Done]] = defaultdict(list)

    def add(self, job: JobRecord, end_time: int | None = None):
        end = job.end_time if end_time is None else end_time
        if end is None:
            raise ValueError(f"job {job.job_id} has no end time")
        if self.now is not None and end < self.now:
            raise ValueError(f"job {job.job_id} ends at {end}, before the store time {self.now}")
        heapq.heappush(self._future, (end, self._seq, job))
        self._seq += 1

    def extend(self, jobs):
        for j in jobs:
            self.add(j)

    def advance(self, now: int):
        if self.now is not None and now < self.now:
            raise ValueError(f"history queried at {now} after {self.now}")
        self.now = now
        while self._future and self._future[0][0] <= now:
            end, _, job = heapq.heappop(self._future)
            self._index(job, end)

    def _index(self, job: JobRecord, end: int):
        d = job.duration
        self.size += 1
        self.global_mean.add(d)
        self.gpu_mean[job.gpu_num].add(d)
        self.user_mean[job.user].add(d)
        self.user_gpu_mean[(job.user, job.gpu_num)].add(d)
        names = self.user_names.get(job.user)
        if names is None:
            names = self.user_names[job.user] = NameClusterIndex(self.tau)
        cid = names.add(job.job_name)
        self.matched[(job.user, cid)].append(_Done(end, d, job.gpu_num))

    def knows_user(self, user: str) -> bool:
        return user in self.user_mean

    def similar_jobs(self, user: str, name: str) -> list[_Done]:
        """The user's finished jobs whose names fall in the cluster matching ``name`` (oldest first)."""
        names = self.user_names.get(user)
        if names is None:
            return []
        cid = names.lookup(name)
        if cid is None:
            return []
        return self.matched[(user, cid)]


def ew_mean(durations_recent_first, gamma: float) -> float:
    """Exponentially weighted mean with weight ``gamma**i`` on the i-th most recent value."""
    num = den = 0.0
    w = 1.0
    for d in durations_recent_first:
        num += w * d
        den += w
        w *= gamma
    return num / den


def rolling_estimate(job: JobRecord, history: HistoryStore, now: int | None = None,
                     gamma: float = 0.8, prior: float = DEFAULT_PRIOR, max_terms: int = 100) -> float:
    """Duration estimate for ``job`` from the history of finished jobs.

    Unknown user: mean duration of jobs with the same GPU demand (or of all
    jobs). Known user without a similarly named job: mean of the user's jobs
    with the same GPU demand (or all the user's jobs). Otherwise an
    exponentially weighted mean over the matched jobs, most recent first,
    restricted to the same GPU demand when any exist.
    """
    if now is not None:
        history.advance(now)
    if history.size == 0:
        return prior
    if not history.knows_user(job.user):
        m = history.gpu_mean.get(job.gpu_num)
        if m is not None and m.count:
            return m.value
        return history.global_mean.value
    similar = history.similar_jobs(job.user, job.job_name)
    if not similar:
        m = history.user_gpu_mean.get((job.user, job.gpu_num))
        if m is not None and m.count:
            return m.value
        return history.user_mean[job.user].value
    # only the recent tail of long match lists is scanned
    same = [s for s in similar[-4 * max_terms:] if s.gpu_num == job.gpu_num]
    pool = same if same else similar
    recent = [s.duration for s in reversed(pool[-max_terms:])]
    return ew_mean(recent, gamma)
