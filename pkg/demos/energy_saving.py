"""
Putting idle nodes to sleep
===========================

Forecast running nodes on a synthetic five-week series, then replay the
last week with the trend-aware controller, the plain idle-sleep baseline
and no sleeping at all.
"""
import sys
from pathlib import Path

from gpusim import svgplot
from gpusim.ces import (CESConfig, ForecastConfig, NodeForecaster, energy_savings, resample, run_ces_simulation,
                        synthetic_node_series)

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(parents=True, exist_ok=True)

# 143 nodes, daily swing of +-25 around 100 running, quieter weekends
series = synthetic_node_series(35, 143, 100, 25, seed=11, weekend_dip=10)
train_days = 28

# the forecaster works on 10-minute means and only sees the training weeks
blocks = resample(series.running[:train_days * 1440], 10)
fc = NodeForecaster.fit(blocks, series.start, ForecastConfig(), cap=143)
bt = fc.backtest(resample(series.running, 10), series.start, len(blocks), steps=18)
print(f"forecast SMAPE on the held-out week: {bt['smape']:.2f}%")

start, end = series.start + train_days * 86400, series.start + 35 * 86400
cfg = CESConfig()
for mode in ("ces", "vanilla", "disabled"):
    r = run_ces_simulation(series, cfg, fc if mode == "ces" else None, start, end, mode)
    print(f"{mode:9s} sleeping {r.avg_sleeping_nodes:5.1f} nodes, {r.daily_wakeups:5.1f} wake-ups/day, "
          f"utilization {r.utilization_original:.3f} -> {r.utilization_ces:.3f}, "
          f"affected jobs {r.affected_jobs}/{r.total_jobs}, {r.energy_kwh:,.0f} kWh saved")
    if mode == "ces":
        tl = r.timeline
        hours = (tl["minute"] - start) / 3600.0
        (out / "ces_week.svg").write_text(svgplot.line_chart(
            {"active": (hours, tl["active"]), "running": (hours, tl["running"])},
            "Active vs running nodes", "hour", "nodes", step=True))

# a year at 79.5 sleeping nodes, 800 W each plus twice that for cooling
print(f"yearly saving at 79.5 sleeping nodes: {energy_savings(79.5, 8760):,.0f} kWh")
