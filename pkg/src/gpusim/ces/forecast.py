"""Running-node forecasting with calendar, rolling-window and lag features."""
from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..predictor.features import calendar_fields
from ..predictor.gbdt import GBDTConfig, GBDTModel, train_gbdt
from ..scoring import smape

FEATURE_NAMES_BASE = ["hour", "day_of_week", "day_of_month", "holiday"]


@dataclass
class ForecastConfig:
    resolution: int = 600  # seconds per step
    windows: tuple[int, ...] = (3600, 6 * 3600, 86400)
    lags: tuple[int, ...] = (3600, 86400, 7 * 86400)
    holidays: frozenset[str] = frozenset()  # ISO dates
    tz_offset: int = 0
    gbdt: GBDTConfig = field(default_factory=lambda: GBDTConfig(rounds=100, learning_rate=0.1,
                                                                max_depth=6, min_samples_leaf=20))

    def steps(self, seconds: int) -> int:
        if seconds % self.resolution:
            raise ValueError(f"{seconds}s is not a multiple of the {self.resolution}s resolution")
        return seconds // self.resolution

    @property
    def min_history(self) -> int:
        """Steps of history a row needs before it can be built."""
        return max([self.steps(w) for w in self.windows] + [self.steps(l) for l in self.lags])

    @property
    def feature_names(self) -> list[str]:
        names = list(FEATURE_NAMES_BASE)
        for w in self.windows:
            names += [f"mean_{w}s", f"std_{w}s"]
        names += [f"lag_{l}s" for l in self.lags]
        return names


def load_holidays(path) -> frozenset[str]:
    """One ISO date (YYYY-MM-DD) per line; blank lines and ``#`` comments are ignored."""
    out = set()
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if line:
                out.add(dt.date.fromisoformat(line).isoformat())
    return frozenset(out)


def resample(values, factor: int) -> np.ndarray:
    """Mean over consecutive blocks of ``factor`` samples (a trailing partial block is dropped)."""
    v = np.asarray(values, dtype=np.float64)
    n = len(v) // factor
    return v[:n * factor].reshape(n, factor).mean(axis=1)


def _calendar_block(times, cfg: ForecastConfig) -> np.ndarray:
    cal = calendar_fields(times, cfg.tz_offset)
    days = (np.asarray(times, dtype=np.int64) + cfg.tz_offset) // 86400
    iso = days.astype("datetime64[D]").astype(str)
    hol = np.array([d in cfg.holidays for d in iso], dtype=np.float64)
    return np.column_stack([cal["hour"], cal["day_of_week"], cal["day_of_month"], hol]).astype(np.float64)


def forecast_features(values, start: int, cfg: ForecastConfig) -> tuple[np.ndarray, np.ndarray]:
    """Feature rows for every step with enough history, and the indices of those steps.

    Row ``t`` describes the value at step ``t`` using calendar fields of its
    timestamp, rolling mean/std over the preceding windows and lagged
    values; nothing at or after ``t`` is used.
    """
    y = np.asarray(values, dtype=np.float64)
    n = len(y)
    h = cfg.min_history
    idx = np.arange(h, n)
    if len(idx) == 0:
        return np.zeros((0, len(cfg.feature_names))), idx
    times = start + idx * cfg.resolution
    cols = [_calendar_block(times, cfg)]
    c1 = np.concatenate([[0.0], np.cumsum(y)])
    c2 = np.concatenate([[0.0], np.cumsum(y * y)])
    for w in cfg.windows:
        k = cfg.steps(w)
        s1 = c1[idx] - c1[idx - k]
        s2 = c2[idx] - c2[idx - k]
        mean = s1 / k
        var = np.maximum(s2 / k - mean * mean, 0.0)
        cols.append(np.column_stack([mean, np.sqrt(var)]))
    for lag in cfg.lags:
        cols.append(y[idx - cfg.steps(lag)][:, None])
    return np.hstack(cols), idx


def _row(buf: np.ndarray, t_time: int, cfg: ForecastConfig) -> np.ndarray:
    """Feature row for the step right after ``buf`` (whose last entry is step t-1)."""
    parts = [_calendar_block([t_time], cfg)[0]]
    for w in cfg.windows:
        seg = buf[-cfg.steps(w):]
        m = seg.mean()
        parts.append(np.array([m, np.sqrt(max((seg * seg).mean() - m * m, 0.0))]))
    parts.append(np.array([buf[-cfg.steps(l)] for l in cfg.lags]))
    return np.concatenate(parts)


class NodeForecaster:
    """Boosted-tree forecaster of running nodes, applied recursively over a horizon."""

    def __init__(self, cfg: ForecastConfig, model: GBDTModel, trained_until: int, cap: float | None = None):
        self.cfg = cfg
        self.model = model
        self.trained_until = trained_until
        self.cap = cap

    @classmethod
    def fit(cls, values, start: int, cfg: ForecastConfig | None = None, cap: float | None = None) -> "NodeForecaster":
        """Train on a series sampled every ``cfg.resolution`` seconds from ``start``."""
        cfg = cfg or ForecastConfig()
        X, idx = forecast_features(values, start, cfg)
        if len(idx) == 0:
            raise ValueError(f"need more than {cfg.min_history} steps to train")
        y = np.asarray(values, dtype=np.float64)[idx]
        model = train_gbdt(X, y, cfg.gbdt)
        return cls(cfg, model, start + len(values) * cfg.resolution, cap)

    def forecast(self, history, now: int, steps: int) -> np.ndarray:
        """Predict ``steps`` values starting at time ``now``.

        ``history`` holds the observed values of the steps before ``now``
        (most recent last). Each prediction is appended and feeds the
        rolling and lag features of later steps.
        """
        if self.model is None:
            raise RuntimeError("forecaster is not trained")
        h = self.cfg.min_history
        hist = np.asarray(history, dtype=np.float64)
        if len(hist) < h:
            raise ValueError(f"need {h} steps of history, got {len(hist)}")
        buf = np.empty(h + steps)
        buf[:h] = hist[-h:]
        hi = np.inf if self.cap is None else self.cap
        out = np.empty(steps)
        for k in range(steps):
            x = _row(buf[:h + k], now + k * self.cfg.resolution, self.cfg)
            p = float(np.clip(self.model.predict_raw(x[None, :])[0], 0.0, hi))
            out[k] = p
            buf[h + k] = p
        return out

    def backtest(self, values, start: int, split: int, steps: int | None = None) -> dict:
        """Forecast ``values[split:]`` from ``values[:split]`` and report the error.

        With ``steps`` given, the remainder is forecast in consecutive chunks
        of that many steps, each seeded with the true history before it.
        """
        v = np.asarray(values, dtype=np.float64)
        steps = steps or len(v) - split
        preds = []
        for s in range(split, len(v), steps):
            k = min(steps, len(v) - s)
            preds.append(self.forecast(v[:s], start + s * self.cfg.resolution, k))
        pred = np.concatenate(preds) if preds else np.zeros(0)
        return {"smape": smape(v[split:], pred), "actual": v[split:], "forecast": pred}

    def to_dict(self) -> dict:
        c = asdict(self.cfg)
        c["holidays"] = sorted(self.cfg.holidays)
        return {"format": "gpusim.node-forecaster", "version": 1, "config": c,
                "trained_until": self.trained_until, "cap": self.cap, "gbdt": self.model.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "NodeForecaster":
        c = dict(d["config"])
        c["windows"] = tuple(c["windows"])
        c["lags"] = tuple(c["lags"])
        c["holidays"] = frozenset(c["holidays"])
        c["gbdt"] = GBDTConfig(**c["gbdt"])
        return cls(ForecastConfig(**c), GBDTModel.from_dict(d["gbdt"]), d["trained_until"], d["cap"])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True)

    @classmethod
    def load(cls, path) -> "NodeForecaster":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def forecast_running_nodes(forecaster: NodeForecaster, history, now: int, horizon: int) -> np.ndarray:
    """Forecast running nodes over ``horizon`` seconds (one value per resolution step)."""
    return forecaster.forecast(history, now, forecaster.cfg.steps(horizon))
