import math

import numpy as np
import pytest
from conftest import cluster, job
from hypothesis import given, settings
from hypothesis import strategies as st

from gpusim.predictor import HistoryStore
from gpusim.schedulers import (NoisyOraclePolicy, QSSFPolicy, fifo_priority, fit_noise_sigma, make_policy,
                               merge_priority, qssf_priority, should_preempt, sjf_priority, srtf_remaining)
from gpusim.sim import run_simulation


def order(policy, jobs):
    return [j.job_id for j in sorted(jobs, key=lambda j: (policy.priority(j, 0), j.submit_time, j.job_id))]


def test_fifo_priority():
    assert fifo_priority(job("a", 100, 1, 5)) == 100
    jobs = [job("b", 9, 1, 1), job("a", 5, 1, 1)]
    assert order(make_policy("fifo"), jobs) == ["a", "b"]
    assert order(make_policy("fifo"), [job("z", 5, 1, 1), job("y", 5, 1, 1)]) == ["y", "z"]


def test_sjf_priority():
    assert order(make_policy("sjf"), [job("long", 0, 1, 100), job("short", 0, 1, 10)]) == ["short", "long"]
    same = [job("c", 3, 1, 10), job("a", 1, 1, 10), job("b", 2, 1, 10)]
    assert order(make_policy("sjf"), same) == order(make_policy("fifo"), same)
    with pytest.raises(ValueError):
        sjf_priority(job("x", 0, 1, None))


def test_srtf_rules():
    assert srtf_remaining(100, 30) == 70
    assert should_preempt(5, 50)
    assert not should_preempt(50, 50)


def test_srtf_without_pending_never_preempts():
    res = run_simulation([job("A", 0, 8, 100)], cluster(1), make_policy("srtf"))
    assert res.preemptions == 0


def test_merge_priority_examples():
    assert merge_priority(100, 200, 4, 0.5) == 600
    assert merge_priority(100, 12345, 4, 1.0) == 400
    assert merge_priority(50, 70, 8, 0.3) == 8 * merge_priority(50, 70, 1, 0.3)
    with pytest.raises(ValueError):
        merge_priority(1, 1, 1, 1.5)


def test_qssf_nonfinite_prediction_falls_back():
    h = HistoryStore()
    h.add(job("old", 0, 2, 300, end=300))
    p = qssf_priority(job("q", 400, 2, 0, user="new"), h, lambda j: math.nan, 0.5, now=400)
    assert p == 2 * 300


def test_qssf_uses_history_and_model():
    h = HistoryStore()
    h.add(job("old", 0, 1, 100, user="u", name="run1", end=100))
    pol = QSSFPolicy(history=h, model=lambda j: 300.0, lam=0.5)
    assert pol.priority(job("q", 200, 2, 0, user="u", name="run2"), 200) == 2 * (0.5 * 100 + 0.5 * 300)


def test_qssf_oracle_equals_sjf_for_single_gpu():
    rng = np.random.default_rng(1)
    jobs = [job(f"j{i}", int(s), 1, int(d)) for i, (s, d) in
            enumerate(zip(rng.integers(0, 500, 60), rng.integers(1, 400, 60)))]
    a = run_simulation(jobs, cluster(1), make_policy("qssf-oracle"))
    b = run_simulation(jobs, cluster(1), make_policy("sjf"))
    assert [(o.job_id, o.start) for o in a.outcomes] == [(o.job_id, o.start) for o in b.outcomes]


def test_qssf_history_grows_during_replay():
    pol = QSSFPolicy(history=HistoryStore(), model=None)
    run_simulation([job("a", 0, 8, 10), job("b", 20, 8, 10)], cluster(1), pol)
    assert pol.history.size == 1  # b's end at t=30 is not visible yet
    pol.history.advance(30)
    assert pol.history.size == 2


@settings(max_examples=100, deadline=None)
@given(st.floats(1, 1e5), st.floats(1, 1e5), st.integers(1, 64), st.floats(0, 1), st.floats(0, 1e5))
def test_merge_priority_monotone(pr, pm, n, lam, bump):
    base = merge_priority(pr, pm, n, lam)
    assert merge_priority(pr + bump, pm, n, lam) >= base
    assert merge_priority(pr, pm + bump, n, lam) >= base
    assert merge_priority(pr, pm, n + 1, lam) >= base


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 1000))
def test_scaling_priorities_keeps_schedule(seed, scale):
    rng = np.random.default_rng(seed)
    jobs = [job(f"j{i}", int(s), int(g), int(d)) for i, (s, g, d) in
            enumerate(zip(rng.integers(0, 300, 25), rng.choice([1, 2, 4, 8], 25), rng.integers(1, 200, 25)))]

    class Scaled:
        name, preemptive = "scaled", False

        def __init__(self, k):
            self.k = k

        def priority(self, j, now):
            return self.k * j.gpu_num * j.duration

    a = run_simulation(jobs, cluster(2), Scaled(1.0))
    b = run_simulation(jobs, cluster(2), Scaled(scale))
    assert [(o.start, o.end) for o in a.outcomes] == [(o.start, o.end) for o in b.outcomes]


def test_noisy_oracle_deterministic_and_fit():
    pol = NoisyOraclePolicy(sigma=0.5, seed=3)
    j = job("x", 0, 2, 100)
    assert pol.priority(j, 0) == pol.priority(j, 99)
    assert NoisyOraclePolicy(sigma=0.0).priority(j, 0) == 200
    rng = np.random.default_rng(0)
    actual = rng.integers(10, 10000, 5000)
    pred = actual * np.exp(0.7 * rng.standard_normal(5000))
    assert fit_noise_sigma(pred, actual) == pytest.approx(0.7, abs=0.03)


def test_unknown_policy():
    with pytest.raises(ValueError):
        make_policy("lottery")
