"""Numeric encoding of job attributes for the duration model."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..trace import JobRecord
from .levenshtein import NameClusterIndex

UNKNOWN = 0
FEATURE_NAMES = ["user", "vc", "name_cluster", "gpu_num", "cpu_num",
                 "month", "day_of_week", "hour", "minute"]


def calendar_fields(epoch, tz_offset: int = 0) -> dict[str, np.ndarray]:
    """Month (1-12), day of week (Monday=0), day of month, hour and minute of epoch seconds.

    ``tz_offset`` (seconds) shifts UTC into the trace's local time.
    """
    t = np.asarray(epoch, dtype=np.int64) + tz_offset
    days = t // 86400
    d64 = days.astype("datetime64[D]")
    month = d64.astype("datetime64[M]").astype(np.int64) % 12 + 1
    mday = (d64 - d64.astype("datetime64[M]")).astype(np.int64) + 1
    return {
        "month": month,
        "day_of_week": (days + 3) % 7,  # 1970-01-01 was a Thursday
        "day_of_month": mday,
        "hour": (t % 86400) // 3600,
        "minute": (t % 3600) // 60,
    }


class JobEncoder:
    """Category codes fit on a training set; unseen values encode as ``UNKNOWN`` (0)."""

    def __init__(self, tau: float = 0.3, tz_offset: int = 0):
        self.tz_offset = tz_offset
        self.users: dict[str, int] = {}
        self.vcs: dict[str, int] = {}
        self.names = NameClusterIndex(tau)

    @property
    def width(self) -> int:
        return len(FEATURE_NAMES)

    def fit(self, jobs: Sequence[JobRecord]) -> "JobEncoder":
        for j in jobs:
            self.users.setdefault(j.user, len(self.users) + 1)
            self.vcs.setdefault(j.vc, len(self.vcs) + 1)
            if j.job_name not in self.names.assign:
                self.names.add(j.job_name)
        return self

    def name_code(self, name: str) -> int:
        cid = self.names.lookup(name)
        return UNKNOWN if cid is None else cid + 1

    def encode(self, jobs: Sequence[JobRecord]) -> np.ndarray:
        n = len(jobs)
        X = np.zeros((n, self.width), dtype=np.float64)
        if n == 0:
            return X
        cal = calendar_fields([j.submit_time for j in jobs], self.tz_offset)
        cache: dict[str, int] = {}
        for i, j in enumerate(jobs):
            code = cache.get(j.job_name)
            if code is None:
                code = cache[j.job_name] = self.name_code(j.job_name)
            X[i, 0] = self.users.get(j.user, UNKNOWN)
            X[i, 1] = self.vcs.get(j.vc, UNKNOWN)
            X[i, 2] = code
            X[i, 3] = j.gpu_num
            X[i, 4] = j.cpu_num
        X[:, 5] = cal["month"]
        X[:, 6] = cal["day_of_week"]
        X[:, 7] = cal["hour"]
        X[:, 8] = cal["minute"]
        return X

    def to_dict(self) -> dict:
        return {"tz_offset": self.tz_offset, "users": self.users, "vcs": self.vcs,
                "names": self.names.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "JobEncoder":
        enc = cls(d["names"]["tau"], d["tz_offset"])
        enc.users = {k: int(v) for k, v in d["users"].items()}
        enc.vcs = {k: int(v) for k, v in d["vcs"].items()}
        enc.names = NameClusterIndex.from_dict(d["names"])
        return enc


def encode_features(job: JobRecord, encoder: JobEncoder) -> np.ndarray:
    return encoder.encode([job])[0]
