import json

import numpy as np
import pytest
from conftest import cluster, job

from gpusim.schedulers import FIFOPolicy, SJFPolicy, SRTFPolicy
from gpusim.sim import (SimNode, SimOptions, compute_metrics, consolidate_allocate, run_many,
                        run_simulation, schedule_vc)
from gpusim.sim.metrics import (duration_group, jobs_csv, queuing_by_duration_group, queuing_ratio_by_group,
                                summary_json, utilization_csv, utilization_timeline)


def nodes(free, total=8):
    return [SimNode(i, "vc0", total, f) for i, f in enumerate(free)]


def times(res):
    return {o.job_id: (o.start, o.end) for o in res.outcomes}


# placement

def test_multi_node_job_takes_fully_free_nodes():
    assert consolidate_allocate(16, nodes([8, 8, 4])) == {0: 8, 1: 8}


def test_best_fit_single_node():
    assert consolidate_allocate(4, nodes([2, 5, 8])) == {1: 4}


def test_no_room():
    assert consolidate_allocate(1, nodes([0, 0])) is None
    assert consolidate_allocate(16, nodes([8, 7])) is None


def test_remainder_goes_best_fit():
    assert consolidate_allocate(12, nodes([3, 8, 6, 8])) == {1: 8, 2: 4}


def test_placement_does_not_mutate():
    ns = nodes([8, 4])
    consolidate_allocate(4, ns)
    assert [n.free_gpus for n in ns] == [8, 4]


# schedule_vc

def test_schedule_vc_head_of_line_blocking():
    ns = nodes([4])
    started = schedule_vc([job("big", 0, 8, 10), job("small", 1, 2, 10)], ns)
    assert started == [] and ns[0].free_gpus == 4


def test_schedule_vc_all_fit_in_order():
    ns = nodes([8, 8])
    q = [job("a", 0, 4, 1), job("b", 0, 8, 1), job("c", 0, 2, 1)]
    started = schedule_vc(q, ns)
    assert [j.job_id for j, _ in started] == ["a", "b", "c"]
    assert sum(n.free_gpus for n in ns) == 2


def test_equal_priority_earlier_submit_first():
    # SJF with equal durations: the earlier submission wins the single node
    jobs = [job("late", 5, 8, 10), job("early", 2, 8, 10), job("blocker", 0, 8, 10)]
    res = run_simulation(jobs, cluster(1), SJFPolicy())
    t = times(res)
    assert t["early"][0] < t["late"][0]


# engine

def test_empty_trace():
    res = run_simulation([], cluster(1), FIFOPolicy())
    assert res.outcomes == [] and res.unschedulable == []
    m = compute_metrics(res)
    assert m.jobs == 0 and m.avg_jct == 0


def test_hand_trace_fifo_and_sjf():
    jobs = [job("A", 0, 8, 100), job("B", 0, 8, 10)]
    fifo = run_simulation(jobs, cluster(1), FIFOPolicy())
    sjf = run_simulation(jobs, cluster(1), SJFPolicy())
    assert times(fifo) == {"A": (0, 100), "B": (100, 110)}
    assert times(sjf) == {"B": (0, 10), "A": (10, 110)}
    mf, ms = compute_metrics(fifo), compute_metrics(sjf)
    assert mf.avg_jct == 105 and ms.avg_jct == 60
    assert mf.avg_queuing == 50 and mf.queued_job_count == 1


def test_end_before_submit_at_same_time():
    jobs = [job("A", 0, 8, 10), job("B", 10, 8, 5)]
    assert times(run_simulation(jobs, cluster(1), FIFOPolicy()))["B"] == (10, 15)


def test_cpu_jobs_and_unschedulable_are_excluded():
    jobs = [job("cpu", 0, 0, 10), job("huge", 0, 16, 10), job("ok", 0, 8, 5), job("ghost", 0, 1, 5, vc="nope")]
    res = run_simulation(jobs, cluster(1), FIFOPolicy())
    assert [o.job_id for o in res.outcomes] == ["ok"]
    assert sorted(res.unschedulable) == ["ghost", "huge"]
    assert compute_metrics(res).unschedulable == 2


def test_vcs_do_not_share_nodes():
    c = cluster(2, vcs={"a": 1, "b": 1})
    jobs = [job("x", 0, 8, 100, vc="a"), job("y", 1, 8, 10, vc="a")]
    res = run_simulation(jobs, c, FIFOPolicy())
    assert times(res)["y"] == (100, 110)


def test_shared_pool_without_vcs():
    from gpusim.trace import ClusterSpec
    c = ClusterSpec("pool", 2, 8)
    jobs = [job("x", 0, 8, 100, vc="a"), job("y", 1, 8, 10, vc="b")]
    assert times(run_simulation(jobs, c, FIFOPolicy()))["y"] == (1, 11)


def test_srtf_preempts_and_resumes():
    jobs = [job("A", 0, 8, 100), job("B", 10, 8, 20)]
    res = run_simulation(jobs, cluster(1), SRTFPolicy())
    by = res.by_id()
    assert (by["B"].start, by["B"].end) == (10, 30)
    assert [(s.start, s.end) for s in by["A"].segments] == [(0, 10), (30, 120)]
    assert res.preemptions == 1
    m = compute_metrics(res)
    # queuing is JCT minus service, so A waited 20 s while preempted
    assert m.per_vc["vc0"].total_queuing == 20
    assert m.avg_jct - m.avg_queuing == pytest.approx(60)


def test_srtf_equal_remaining_no_preemption():
    jobs = [job("A", 0, 8, 20), job("B", 10, 8, 10)]
    res = run_simulation(jobs, cluster(1), SRTFPolicy())
    assert times(res) == {"A": (0, 20), "B": (20, 30)} and res.preemptions == 0


def test_policy_hooks_called():
    calls = []

    class Spy(FIFOPolicy):
        def on_job_end(self, j, now):
            calls.append(("end", j.job_id, now))

        def on_tick(self, now):
            calls.append(("tick", now))

    run_simulation([job("A", 0, 8, 25), job("B", 0, 8, 5)], cluster(1), Spy(), SimOptions(tick_period=10))
    assert ("end", "A", 25) in calls and ("end", "B", 30) in calls
    ticks = [c[1] for c in calls if c[0] == "tick"]
    assert ticks[:3] == [0, 10, 20]


def test_run_many_matches_serial():
    jobs = [job(str(i), i * 3, 1 << (i % 4), 10 + 7 * i) for i in range(30)]
    c = cluster(2)
    pol = {"fifo": FIFOPolicy, "sjf": SJFPolicy, "srtf": SRTFPolicy}
    a = run_many(jobs, c, pol)
    b = run_many(jobs, c, pol, workers=2)
    for k in pol:
        assert jobs_csv(a[k]) == jobs_csv(b[k])


# metrics

def test_metrics_identity_and_threshold():
    jobs = [job("A", 0, 8, 100), job("B", 0, 8, 10), job("C", 5, 8, 1)]
    res = run_simulation(jobs, cluster(1), FIFOPolicy())
    m = compute_metrics(res)
    assert m.total_jct - m.total_queuing == m.total_duration
    assert compute_metrics(res, queue_threshold=100).queued_job_count == 1  # only C waited > 100 s
    d = json.loads(summary_json(m))
    assert d["avg_jct"] == m.avg_jct and "vc0" in d["per_vc"]


def test_all_start_at_submit_zero_queuing():
    res = run_simulation([job("A", 0, 1, 10), job("B", 0, 1, 10)], cluster(1), FIFOPolicy())
    assert compute_metrics(res).avg_queuing == 0


def test_exports():
    res = run_simulation([job("A", 0, 8, 120), job("B", 0, 4, 60)], cluster(2), FIFOPolicy())
    lines = jobs_csv(res).splitlines()
    assert lines[0] == "job_id,submit,start,end,gpu_num,vc"
    assert lines[1:] == ["A,0,0,120,8,vc0", "B,0,0,60,4,vc0"]
    u = utilization_csv(res).splitlines()
    assert u[0] == "t,busy_gpus,total_gpus"
    rows = [r.split(",") for r in u[1:]]
    assert [(int(t), float(b), int(g)) for t, b, g in rows] == [(0, 12.0, 16), (60, 8.0, 16)]
    frac, t0 = utilization_timeline(res)
    assert t0 == 0 and np.allclose(frac, [0.75, 0.5])


def test_duration_groups():
    assert duration_group(899) == "short" and duration_group(900) == "middle"
    assert duration_group(6 * 3600) == "middle" and duration_group(6 * 3600 + 1) == "long"
    jobs = [job("A", 0, 8, 30000), job("B", 0, 8, 10), job("C", 0, 8, 1000)]
    fifo = run_simulation(jobs, cluster(1), FIFOPolicy())
    sjf = run_simulation(jobs, cluster(1), SJFPolicy())
    q = queuing_by_duration_group(fifo)
    assert q == {"short": 30000, "middle": 30010, "long": 0}
    r = queuing_ratio_by_group(fifo, sjf)
    assert r["short"] == float("inf") and r["middle"] == pytest.approx(30010 / 10)
    assert r["long"] == 0.0


# recorded placement

def test_place_recorded_uses_recorded_times():
    from gpusim.sim import place_recorded
    jobs = [job("a", 0, 4, 100, start=10, end=110), job("b", 0, 4, 50, start=20, end=70),
            job("c", 0, 16, 5, start=200, end=205), job("cpu", 0, 0, 5, start=0, end=5), job("q", 0, 1, 5)]
    rp = place_recorded(jobs, cluster(2))
    by = rp.result.by_id()
    assert set(by) == {"a", "b", "c"} and rp.spread == 0 and rp.skipped == []
    assert list(by["a"].segments[0].placement) == list(by["b"].segments[0].placement)  # packed together
    assert by["c"].segments[0].placement == {0: 8, 1: 8}
    from gpusim.sim.engine import check_result
    check_result(rp.result)


def test_place_recorded_spreads_when_history_disagrees():
    from gpusim.sim import place_recorded
    # two 6-GPU jobs leave 2+2 free; the recorded 4-GPU job must span both nodes
    jobs = [job("x", 0, 6, 100, start=0, end=100), job("y", 0, 6, 100, start=0, end=100),
            job("z", 0, 4, 10, start=5, end=15), job("w", 0, 8, 10, start=6, end=16)]
    rp = place_recorded(jobs, cluster(2))
    assert rp.spread == 1 and rp.skipped == ["w"]
    assert sorted(rp.result.by_id()["z"].segments[0].placement.values()) == [2, 2]
