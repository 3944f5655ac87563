"""Queue-ordering policies for the replay engine.

Lower priority values run first. Non-preemptive policies compute a job's
priority once, at submission. SRTF is handled by the engine directly and
keys its queue by remaining service time.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .predictor.history import DEFAULT_PRIOR, HistoryStore, rolling_estimate
from .trace import JobRecord

logger = logging.getLogger(__name__)

POLICIES = ("fifo", "sjf", "srtf", "qssf")


def fifo_priority(job: JobRecord) -> float:
    return float(job.submit_time)


def sjf_priority(job: JobRecord) -> float:
    if job.duration is None:
        raise ValueError(f"job {job.job_id} has no duration for SJF")
    return float(job.duration)


def srtf_remaining(duration: int, served: int) -> int:
    return duration - served


def should_preempt(pending_remaining: int, running_remaining: int) -> bool:
    """Preemption needs a strictly shorter pending job (capacity is checked by the engine)."""
    return pending_remaining < running_remaining


def merge_priority(rolling: float, ml: float, gpu_num: int, lam: float) -> float:
    """Expected GPU time: ``gpu_num * (lam * rolling + (1 - lam) * ml)``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("merging coefficient must lie in [0, 1]")
    return gpu_num * (lam * rolling + (1.0 - lam) * ml)


def qssf_priority(job: JobRecord, history: HistoryStore | None, predictor, lam: float = 0.5,
                  now: int | None = None, gamma: float = 0.8, prior: float = DEFAULT_PRIOR) -> float:
    """Priority of ``job`` as its predicted GPU time.

    ``predictor`` maps a job to a duration in seconds (or is None to use the
    rolling estimate alone). A non-finite prediction falls back to the
    rolling estimate.
    """
    p_r = rolling_estimate(job, history, now, gamma, prior) if history is not None else prior
    if predictor is None:
        return merge_priority(p_r, p_r, job.gpu_num, lam)
    p_m = float(predictor(job))
    if not math.isfinite(p_m):
        logger.warning("non-finite prediction for %s; using rolling estimate", job.job_id)
        p_m = p_r
    return merge_priority(p_r, p_m, job.gpu_num, lam)


class FIFOPolicy:
    name = "fifo"
    preemptive = False

    def priority(self, job, now):
        return fifo_priority(job)


class SJFPolicy:
    name = "sjf"
    preemptive = False

    def priority(self, job, now):
        return sjf_priority(job)


class SRTFPolicy:
    name = "srtf"
    preemptive = True

    def priority(self, job, now):
        return float(job.duration)


@dataclass
class QSSFPolicy:
    """Non-preemptive ordering by predicted GPU time.

    ``history`` receives every job the simulator finishes, so later
    estimates see them. When the run has periodic ticks and the model has an
    ``update`` method, each tick fine-tunes it on the jobs finished since the
    previous tick.
    """
    history: HistoryStore | None = None
    model: Callable | None = None
    lam: float = 0.5
    gamma: float = 0.8
    prior: float = DEFAULT_PRIOR
    rolling: Callable[[JobRecord, int], float] | None = None
    update_rounds: int = 10
    name: str = "qssf"
    preemptive: bool = False
    _batch: list = field(default_factory=list, repr=False)

    @classmethod
    def oracle(cls, lam: float = 0.5) -> "QSSFPolicy":
        """QSSF with a perfect predictor: both estimates equal the true duration."""
        return cls(model=lambda j: float(j.duration), lam=lam,
                   rolling=lambda j, now: float(j.duration), name="qssf-oracle")

    def priority(self, job, now):
        if self.rolling is not None:
            p_r = self.rolling(job, now)
            p_m = float(self.model(job)) if self.model is not None else p_r
            if not math.isfinite(p_m):
                p_m = p_r
            return merge_priority(p_r, p_m, job.gpu_num, self.lam)
        return qssf_priority(job, self.history, self.model, self.lam, now, self.gamma, self.prior)

    def on_job_end(self, job, now):
        if self.history is not None:
            self.history.add(job, end_time=now)
        if hasattr(self.model, "update"):
            self._batch.append(_finished(job, now))

    def on_tick(self, now):
        if self._batch and hasattr(self.model, "update"):
            self.model = self.model.update(self._batch, rounds=self.update_rounds)
            self._batch = []


def _finished(job: JobRecord, end: int) -> JobRecord:
    return replace(job, start_time=end - job.duration, end_time=end)


@dataclass
class NoisyOraclePolicy:
    """GPU-time ordering from true durations times log-normal noise.

    Stands in for a learned predictor when job names are unavailable. The
    noise for a job depends only on ``seed`` and its id.
    """
    sigma: float = 1.0
    seed: int = 0
    name: str = "qssf-noisy"
    preemptive: bool = False

    def factor(self, job_id: str) -> float:
        h = hashlib.sha256(f"{self.seed}:{job_id}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(h[:8], "little"))
        return float(np.exp(self.sigma * rng.standard_normal()))

    def priority(self, job, now):
        return job.gpu_num * job.duration * self.factor(job.job_id)


def fit_noise_sigma(predicted, actual) -> float:
    """Standard deviation of ``log(predicted / actual)``, the spread of a predictor's errors."""
    p = np.maximum(np.asarray(predicted, dtype=np.float64), 1.0)
    a = np.maximum(np.asarray(actual, dtype=np.float64), 1.0)
    return float(np.std(np.log(p / a)))


def make_policy(name: str, **kw):
    """Build a policy by name: fifo, sjf, srtf, qssf, qssf-oracle or qssf-noisy."""
    if name == "fifo":
        return FIFOPolicy()
    if name == "sjf":
        return SJFPolicy()
    if name == "srtf":
        return SRTFPolicy()
    if name == "qssf":
        return QSSFPolicy(**kw)
    if name == "qssf-oracle":
        return QSSFPolicy.oracle(kw.get("lam", 0.5))
    if name == "qssf-noisy":
        return NoisyOraclePolicy(**kw)
    raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}")
