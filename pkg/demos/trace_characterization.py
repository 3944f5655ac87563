"""
Characterizing a job trace
==========================

Generate a synthetic week of jobs, give them start and end times with a
FIFO replay, then look at durations, GPU demand, final statuses and users.
"""
import sys
from pathlib import Path

from gpusim import analytics
from gpusim.trace import ClusterSpec, SynthParams, VCConfig, synth_trace

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output") / "characterization"

# a 16-node cluster split between two virtual clusters
cluster = ClusterSpec("demo", 16, 8, [VCConfig("vc0", 8), VCConfig("vc1", 8)])
jobs = synth_trace(SynthParams(job_count=5000, span_days=7, cpu_job_fraction=0.2, seed=1))

# synthetic jobs carry no start/end, so replay them under FIFO first
jobs = analytics.fill_times(jobs, cluster)
print("summary:", analytics.summary(jobs))

# most GPU jobs are short, a few run for days
cdf = analytics.duration_cdf(jobs, "gpu")
print(f"GPU jobs: median {cdf.median:.0f}s, mean {cdf.mean:.0f}s, under 1h: {cdf.at(3600):.1%}")

# single-GPU jobs dominate by count; big jobs dominate GPU time
print(analytics.gpu_demand_breakdown(jobs).round(3).to_string(index=False))

print(analytics.status_breakdown(jobs, "gpu_bucket").round(3).to_string(index=False))

users = analytics.user_stats(jobs)
print(f"top 5% of users hold {analytics.top_share(users, 'gpu_time'):.1%} of GPU time")

# hourly utilization profile
ut = analytics.utilization_timeline(jobs, cluster)
print(ut.hour_of_day().round(3).to_string())

files = analytics.write_report(jobs, cluster, out)
print("wrote", ", ".join(files), "to", out)
