"""
Comparing scheduling policies
=============================

Replay one synthetic trace under FIFO, SJF, SRTF and QSSF with perfect
durations, then compare completion and queuing times overall and per
duration group.
"""
import functools
import sys
from pathlib import Path

from gpusim import svgplot
from gpusim.schedulers import make_policy
from gpusim.sim import compute_metrics, queuing_by_duration_group, run_many
from gpusim.sim.metrics import utilization_timeline
from gpusim.trace import ClusterSpec, SynthParams, VCConfig, synth_trace

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(parents=True, exist_ok=True)

cluster = ClusterSpec("demo", 8, 8, [VCConfig("vc0", 4), VCConfig("vc1", 4)])
jobs = synth_trace(SynthParams(job_count=3000, span_days=7, seed=0))

# each factory builds a fresh policy, so runs can go to worker processes
factories = {name: functools.partial(make_policy, name) for name in ("fifo", "sjf", "srtf", "qssf-oracle")}
results = run_many(jobs, cluster, factories, workers=2)

print(f"{'policy':12s} {'avg JCT':>10s} {'avg queue':>10s} {'queued':>7s}")
for name, res in results.items():
    m = compute_metrics(res)
    print(f"{name:12s} {m.avg_jct:10.0f} {m.avg_queuing:10.0f} {m.queued_job_count:7d}")

# shortest-first orders help short jobs most, but long jobs should not lose
fifo_q = queuing_by_duration_group(results["fifo"])
qssf_q = queuing_by_duration_group(results["qssf-oracle"])
for g in ("short", "middle", "long"):
    ratio = fifo_q[g] / qssf_q[g] if qssf_q[g] else float("inf")
    print(f"{g:7s} FIFO/QSSF queuing ratio {ratio:.2f}")

# GPU utilization over time is the same work, shifted
series = {}
for name in ("fifo", "qssf-oracle"):
    frac, t0 = utilization_timeline(results[name], resolution=3600)
    series[name] = (list(range(len(frac))), frac)
(out / "scheduler_utilization.svg").write_text(
    svgplot.line_chart(series, "Hourly GPU utilization", "hour", "busy fraction"))
print("wrote", out / "scheduler_utilization.svg")
