"""Job duration model: encoder + boosted trees, with persistence and fine-tuning."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..scoring import rmse, smape
from ..trace import JobRecord
from .features import JobEncoder
from .gbdt import GBDTConfig, GBDTModel, train_gbdt, update_model

logger = logging.getLogger(__name__)

MODEL_FORMAT = "gpusim.duration-model"
MODEL_VERSION = 1


class DurationModel:
    """Predicts job duration (seconds) from submit-time attributes.

    Targets are trained in ``log1p`` space by default since durations span
    seconds to weeks; predictions are mapped back and clamped to >= 1 s.
    """

    def __init__(self, encoder: JobEncoder, gbdt: GBDTModel, log_target: bool = True,
                 trained_until: int | None = None, window: int = 30 * 86400):
        self.encoder = encoder
        self.gbdt = gbdt
        self.log_target = log_target
        self.trained_until = trained_until
        self.window = window

    @classmethod
    def fit(cls, jobs: Sequence[JobRecord], config: GBDTConfig | None = None, tau: float = 0.3,
            tz_offset: int = 0, log_target: bool = True) -> "DurationModel":
        if not jobs:
            raise ValueError("empty training set")
        enc = JobEncoder(tau, tz_offset).fit(jobs)
        X = enc.encode(jobs)
        y = np.array([j.duration for j in jobs], dtype=np.float64)
        gb = train_gbdt(X, np.log1p(y) if log_target else y, config)
        until = max((j.end_time for j in jobs if j.end_time is not None), default=None)
        return cls(enc, gb, log_target, until)

    def _forward(self, X) -> np.ndarray:
        raw = self.gbdt.predict_raw(X)
        if self.log_target:
            raw = np.expm1(np.minimum(raw, 50.0))
        return np.maximum(raw, 1.0)

    def predict(self, jobs: Sequence[JobRecord]) -> np.ndarray:
        return self._forward(self.encoder.encode(jobs))

    def predict_one(self, job: JobRecord) -> float:
        return float(self.predict([job])[0])

    __call__ = predict_one

    def update(self, jobs: Sequence[JobRecord], rounds: int = 20) -> "DurationModel":
        """Fine-tune on recently finished jobs, keeping those within ``window`` of the newest end.

        Encoders stay frozen, so new users or VCs map to the unknown code.
        """
        jobs = [j for j in jobs if j.end_time is not None]
        if not jobs:
            return self
        latest = max(j.end_time for j in jobs)
        recent = [j for j in jobs if j.end_time >= latest - self.window]
        X = self.encoder.encode(recent)
        y = np.array([j.duration for j in recent], dtype=np.float64)
        gb = update_model(self.gbdt, X, np.log1p(y) if self.log_target else y, rounds)
        until = max(latest, self.trained_until or latest)
        return DurationModel(self.encoder, gb, self.log_target, until, self.window)

    def evaluate(self, jobs: Sequence[JobRecord]) -> dict:
        pred = self.predict(jobs)
        actual = np.array([j.duration for j in jobs], dtype=np.float64)
        return {"jobs": len(jobs), "rmse": rmse(actual, pred), "smape": smape(actual, pred)}

    def to_dict(self) -> dict:
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "log_target": self.log_target,
                "trained_until": self.trained_until, "window": self.window,
                "encoder": self.encoder.to_dict(), "gbdt": self.gbdt.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "DurationModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ValueError("not a duration model file")
        return cls(JobEncoder.from_dict(d["encoder"]), GBDTModel.from_dict(d["gbdt"]),
                   d["log_target"], d["trained_until"], d["window"])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True)

    @classmethod
    def load(cls, path) -> "DurationModel":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


@dataclass
class TrainSplit:
    train: list[JobRecord]
    test: list[JobRecord]


def split_by_time(jobs: Sequence[JobRecord], cutoff: int) -> TrainSplit:
    """Train on jobs that finished before ``cutoff``; test on jobs submitted at or after it."""
    train = [j for j in jobs if j.end_time is not None and j.end_time < cutoff]
    test = [j for j in jobs if j.submit_time >= cutoff]
    return TrainSplit(train, test)
