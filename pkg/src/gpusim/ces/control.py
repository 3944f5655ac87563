"""Node sleep/wake control replayed against a running-node time series."""
from __future__ import annotations

import csv
import enum
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ..sim.engine import SimResult
from ..timeline import minute_edges
from .forecast import NodeForecaster, resample

logger = logging.getLogger(__name__)


class NodeState(enum.Enum):
    ACTIVE_BUSY = "active_busy"
    ACTIVE_IDLE = "active_idle"
    SLEEPING = "sleeping"
    WAKING = "waking"


@dataclass
class CESConfig:
    buffer_nodes: int = 3
    history_threshold: float = 2.0  # minimum drop in running nodes over the past window
    forecast_threshold: float = 2.0  # minimum predicted drop over the horizon
    check_period: int = 600
    history_window: int = 3600
    forecast_horizon: int = 3 * 3600
    boot_delay: int = 300

    def check(self):
        if self.buffer_nodes < 0:
            raise ValueError("buffer_nodes must be non-negative")
        for name in ("check_period", "history_window", "forecast_horizon", "boot_delay"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.check_period % 60 or self.history_window % 60:
            raise ValueError("check_period and history_window must be whole minutes")


@dataclass
class EnergyModel:
    idle_node_watts: float = 800.0
    cooling_multiplier: float = 2.0  # cooling draws this many times the server power


def energy_savings(avg_sleeping_nodes: float, hours: float, model: EnergyModel | None = None) -> float:
    """kWh saved by keeping ``avg_sleeping_nodes`` idle nodes asleep for ``hours``, cooling included."""
    m = model or EnergyModel()
    return avg_sleeping_nodes * m.idle_node_watts / 1000.0 * (1.0 + m.cooling_multiplier) * hours


@dataclass
class NodeSeries:
    """Per-minute node counts starting at ``start`` (epoch seconds, minute aligned).

    ``starts`` optionally counts the jobs that begin in each minute.
    """
    start: int
    total: np.ndarray
    running: np.ndarray
    starts: np.ndarray | None = None

    def __post_init__(self):
        self.total = np.asarray(self.total, dtype=np.int64)
        self.running = np.asarray(self.running, dtype=np.int64)
        if self.total.shape != self.running.shape:
            raise ValueError("total and running must have equal length")
        if (self.running > self.total).any() or (self.running < 0).any():
            raise ValueError("running nodes must lie in [0, total]")

    def __len__(self):
        return len(self.total)

    def index(self, t: int) -> int:
        return (t - self.start) // 60

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["minute", "total", "running"])
        for i in range(len(self)):
            w.writerow([self.start + 60 * i, int(self.total[i]), int(self.running[i])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, stream) -> "NodeSeries":
        text = stream if isinstance(stream, str) else stream.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [h.strip() for h in rows[0]] != ["minute", "total", "running"]:
            raise ValueError("node series header must be minute,total,running")
        data = np.array([[int(x) for x in r] for r in rows[1:] if r], dtype=np.int64)
        if len(data) == 0:
            raise ValueError("empty node series")
        minutes = data[:, 0]
        if (np.diff(minutes) != 60).any():
            raise ValueError("node series must be contiguous at one-minute spacing")
        return cls(int(minutes[0]), data[:, 1], data[:, 2])

    def slice(self, t0: int, t1: int) -> "NodeSeries":
        a, b = max(self.index(t0), 0), min(self.index(t1), len(self))
        starts = None if self.starts is None else self.starts[a:b]
        return NodeSeries(self.start + 60 * a, self.total[a:b], self.running[a:b], starts)


def node_series_from_result(result: SimResult, t0: int | None = None, t1: int | None = None) -> NodeSeries:
    """Running nodes per minute from a replay: a node runs in a minute if any job holds any of its GPUs then."""
    segs = [(s.start, s.end, s.placement) for o in result.outcomes for s in o.segments if s.end > s.start]
    total_nodes = sum(len(v) for v in result.vc_nodes.values())
    if t0 is None:
        t0 = min((s[0] for s in segs), default=0)
    if t1 is None:
        t1 = max((s[1] for s in segs), default=t0 + 60)
    edges = minute_edges(t0, t1)
    start = int(edges[0])
    n = len(edges) - 1
    per_node: dict[int, list[tuple[int, int]]] = {}
    for st, en, placement in segs:
        a = (st - start) // 60
        b = -(-(en - start) // 60)
        a, b = max(a, 0), min(b, n)
        if b <= a:
            continue
        for nid in placement:
            per_node.setdefault(nid, []).append((a, b))
    running = np.zeros(n, dtype=np.int64)
    diff = np.zeros(n + 1, dtype=np.int64)
    for spans in per_node.values():
        diff[:] = 0
        arr = np.array(spans)
        np.add.at(diff, arr[:, 0], 1)
        np.add.at(diff, arr[:, 1], -1)
        running += np.cumsum(diff[:-1]) > 0
    starts = np.zeros(n, dtype=np.int64)
    for o in result.outcomes:
        k = (o.start - start) // 60
        if 0 <= k < n:
            starts[k] += 1
    return NodeSeries(start, np.full(n, total_nodes), running, starts)


def job_arrival_check(active: int, request: int, buffer_nodes: int) -> int:
    """Nodes to wake when a request exceeds the active nodes (0 when it fits)."""
    return request - active + buffer_nodes if active < request else 0


def recent_nodes_trend(running_history) -> float:
    """Drop in running nodes from the start of the window to now (positive means shrinking)."""
    h = np.asarray(running_history, dtype=np.float64)
    return float(h[0] - h[-1])


def future_nodes_trend(forecast) -> float:
    """Predicted drop from the first forecast step to the lowest point of the horizon."""
    f = np.asarray(forecast, dtype=np.float64)
    return float(f[0] - f.min())


def periodic_check(history, active: int, running: int, forecast, history_threshold: float,
                   forecast_threshold: float, buffer_nodes: int, expected_steps: int | None = None) -> int | None:
    """Target active-node count if both trends show shrinking demand, else None.

    A forecast shorter than ``expected_steps`` yields None so the cluster
    errs on the side of availability.
    """
    if forecast is None or len(forecast) == 0 or (expected_steps is not None and len(forecast) < expected_steps):
        logger.warning("forecast shorter than the horizon; skipping sleep decision")
        return None
    if recent_nodes_trend(history) >= history_threshold and future_nodes_trend(forecast) >= forecast_threshold:
        return max(running + buffer_nodes, running)
    return None


@dataclass
class CESReport:
    mode: str
    minutes: int
    avg_sleeping_nodes: float
    wake_calls: int
    daily_wakeups: float
    avg_woken_per_call: float
    utilization_original: float
    utilization_ces: float
    affected_jobs: int
    total_jobs: int
    energy_kwh: float
    timeline: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "timeline"}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def state_counts(self) -> dict[NodeState, np.ndarray]:
        """Nodes per state for every minute of the evaluation window."""
        tl = self.timeline
        ready = tl["active"] - tl["waking"]
        busy = np.minimum(tl["running"], ready)
        return {NodeState.ACTIVE_BUSY: busy, NodeState.ACTIVE_IDLE: ready - busy,
                NodeState.SLEEPING: tl["sleeping"], NodeState.WAKING: tl["waking"]}

    def timeline_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["minute", "active", "running", "sleeping"])
        tl = self.timeline
        for row in zip(tl["minute"], tl["active"], tl["running"], tl["sleeping"]):
            w.writerow([int(x) for x in row])
        return buf.getvalue()


def run_ces_simulation(series: NodeSeries, config: CESConfig, forecaster: NodeForecaster | None,
                       eval_start: int, eval_end: int, mode: str = "ces",
                       energy: EnergyModel | None = None) -> CESReport:
    """Replay the sleep/wake controller over ``[eval_start, eval_end)``.

    ``mode`` is ``ces`` (both trend checks), ``vanilla`` (sleep every idle
    node beyond the buffer at each check, ignoring trends) or ``disabled``.
    The job schedule itself is taken as given: when running nodes exceed the
    ready nodes, the jobs starting in that minute count as affected by the
    boot delay.
    """
    config.check()
    if mode not in ("ces", "vanilla", "disabled"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "ces":
        if forecaster is None:
            raise ValueError("ces mode needs a trained forecaster")
        if forecaster.trained_until > eval_start:
            raise ValueError("forecaster was trained on data past the evaluation start")
    i0, i1 = series.index(eval_start), series.index(eval_end)
    if i0 < 0 or i1 > len(series) or i1 <= i0:
        raise ValueError(f"evaluation window [{eval_start}, {eval_end}) outside the node series "
                         f"[{series.start}, {series.start + 60 * len(series)})")

    res = forecaster.cfg.resolution if forecaster is not None else config.check_period
    factor = res // 60
    horizon_steps = config.forecast_horizon // res
    window_min = config.history_window // 60
    period_min = config.check_period // 60

    total = int(series.total[i0])
    ready = total  # active nodes able to host jobs
    sleeping: list[int] = []  # node ids, most recently slept last
    waking: list[tuple[int, int]] = []  # (ready_at, node id)
    free_ids = list(range(total))  # active ids not yet assigned a state change
    wake_calls = woken = affected = 0
    n = i1 - i0
    blocks_all = resample(series.running, factor)
    tl_active = np.zeros(n, dtype=np.int64)
    tl_wake = np.zeros(n, dtype=np.int64)
    tl_sleep = np.zeros(n, dtype=np.int64)
    tl_running = series.running[i0:i1].copy()
    powered_eff = np.zeros(n, dtype=np.int64)

    for k in range(n):
        i = i0 + k
        t = series.start + 60 * i
        if waking:
            done = [w for w in waking if w[0] <= t]
            if done:
                waking = [w for w in waking if w[0] > t]
                ready += len(done)
                free_ids.extend(nid for _, nid in done)
        r = int(series.running[i])
        if r > ready:
            if mode != "disabled":
                affected += int(series.starts[i]) if series.starts is not None and series.starts[i] > 0 else 1
            need = job_arrival_check(ready + len(waking), r, config.buffer_nodes)
            need = min(need, len(sleeping))
            if need > 0:
                wake_calls += 1
                woken += need
                for _ in range(need):
                    waking.append((t + config.boot_delay, sleeping.pop()))
        if mode != "disabled" and k % period_min == 0 and k > 0:
            target = None
            if mode == "vanilla":
                target = r + config.buffer_nodes
            else:
                hist_run = series.running[max(i - window_min, 0):i + 1]
                # the forecast is only needed once the history trend qualifies
                if recent_nodes_trend(hist_run) >= config.history_threshold:
                    blocks = blocks_all[:i // factor]
                    t_blocks = series.start + len(blocks) * res
                    fc = forecaster.forecast(blocks, t_blocks, horizon_steps)
                    target = periodic_check(hist_run, ready, r, fc, config.history_threshold,
                                            config.forecast_threshold, config.buffer_nodes, horizon_steps)
            if target is not None and ready > target:
                for _ in range(ready - target):
                    sleeping.append(free_ids.pop())
                ready = target
        tl_active[k] = ready + len(waking)
        tl_wake[k] = len(waking)
        tl_sleep[k] = len(sleeping)
        powered_eff[k] = max(ready + len(waking), r)

    run_sum = float(tl_running.sum())
    days = n / 1440.0
    avg_sleep = float(tl_sleep.mean()) if n else 0.0
    tl = {"minute": series.start + 60 * np.arange(i0, i1), "active": tl_active,
          "running": tl_running, "sleeping": tl_sleep, "waking": tl_wake}
    return CESReport(
        mode=mode, minutes=n, avg_sleeping_nodes=avg_sleep, wake_calls=wake_calls,
        daily_wakeups=wake_calls / days if days else 0.0,
        avg_woken_per_call=woken / wake_calls if wake_calls else 0.0,
        utilization_original=run_sum / float(series.total[i0:i1].sum()),
        utilization_ces=run_sum / float(powered_eff.sum()) if n else 0.0,
        affected_jobs=affected,
        total_jobs=int(series.starts[i0:i1].sum()) if series.starts is not None else 0,
        energy_kwh=energy_savings(avg_sleep, n / 60.0, energy),
        timeline=tl,
    )
