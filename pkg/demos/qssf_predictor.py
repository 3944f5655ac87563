"""
Predicting job durations for QSSF
=================================

Train the duration model on the first three weeks of a synthetic trace,
check its accuracy on the last week, and replay that week under QSSF with
the learned model next to FIFO and SJF.
"""
from gpusim.analytics import fill_times
from gpusim.predictor import DurationModel, GBDTConfig, HistoryStore, cluster_names, split_by_time
from gpusim.schedulers import QSSFPolicy, make_policy
from gpusim.sim import compute_metrics, run_simulation
from gpusim.trace import ClusterSpec, SynthParams, VCConfig, synth_trace

cluster = ClusterSpec("demo", 8, 8, [VCConfig("vc0", 4), VCConfig("vc1", 4)])
params = SynthParams(job_count=12000, span_days=28, seed=3)
jobs = fill_times(synth_trace(params), cluster)

# names that differ by a run number fall in the same group
names = cluster_names(["bert_base_run1", "bert_base_run2", "resnet50", "resnet50_v2", "eval"])
print("name groups:", names.assign)

cutoff = params.start_time + 21 * 86400
split = split_by_time(jobs, cutoff)
model = DurationModel.fit(split.train, GBDTConfig(rounds=100))
print("held-out accuracy:", model.evaluate(split.test))

# history holds jobs that finished before the cutoff; later ones join as they end
history = HistoryStore()
for j in split.train:
    history.add(j)
week = [j for j in jobs if j.submit_time >= cutoff]

for name, policy in (("fifo", make_policy("fifo")), ("sjf", make_policy("sjf")),
                     ("qssf", QSSFPolicy(history=history, model=model))):
    m = compute_metrics(run_simulation(week, cluster, policy))
    print(f"{name:5s} avg JCT {m.avg_jct:9.0f}s  avg queuing {m.avg_queuing:9.0f}s")
