import calendar
import math
from functools import lru_cache

import numpy as np
import pytest
from conftest import job
from hypothesis import given, settings
from hypothesis import strategies as st

from gpusim.predictor import (UNKNOWN, DurationModel, GBDTConfig, HistoryStore, JobEncoder, NameClusterIndex,
                              calendar_fields, cluster_names, encode_features, ew_mean, fit_tree, levenshtein,
                              normalized_distance, predict_gbdt, rolling_estimate, split_by_time, train_gbdt,
                              update_model)
from gpusim.predictor.levenshtein import levenshtein_within
from gpusim.scoring import rmse, smape
from gpusim.trace import SynthParams, synth_trace


def lev_oracle(a, b):
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))
    return d(len(a), len(b))


# levenshtein and clustering

def test_levenshtein_examples():
    assert levenshtein("abc", "abc") == 0
    assert levenshtein("", "abc") == 3
    assert levenshtein("kitten", "sitting") == 3


@settings(max_examples=300, deadline=None)
@given(st.text("abcd", max_size=12), st.text("abcd", max_size=12), st.integers(0, 12))
def test_levenshtein_within_agrees(a, b, limit):
    d = lev_oracle(a, b)
    assert levenshtein(a, b) == d == levenshtein(b, a)
    got = levenshtein_within(a, b, limit)
    assert got == (d if d <= limit else None)


def test_cluster_names_examples():
    assert normalized_distance("run1", "run2") == 0.25
    assert normalized_distance("run1", "eval") > 0.3
    idx = cluster_names(["run1", "run2", "eval"], 0.3)
    assert idx.assign["run1"] == idx.assign["run2"] != idx.assign["eval"]
    exact = cluster_names(["a", "b", "a", "ab"], 0.0)
    assert exact.n_clusters == 3 and exact.assign["a"] != exact.assign["ab"]
    assert cluster_names([], 0.3).n_clusters == 0


def test_cluster_index_round_trip():
    idx = cluster_names(["train_a1", "train_a2", "eval_x", "zzz"], 0.3)
    again = NameClusterIndex.from_dict(idx.to_dict())
    assert again.assign == idx.assign and again.lookup("train_a3") == idx.lookup("train_a3")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.text("ab_1", min_size=1, max_size=6), min_size=1, max_size=12), st.randoms())
def test_identical_names_never_split(names, rnd):
    leaders = list(dict.fromkeys(names))
    rest = names + names
    rnd.shuffle(rest)
    idx = cluster_names(leaders + rest, 0.3)
    for n in names:
        assert idx.assign[n] == idx.lookup(n)


# rolling estimate

def hist_with(jobs, tau=0.3):
    h = HistoryStore(tau)
    for j in jobs:
        h.add(j)
    return h


def test_rolling_unknown_user_uses_gpu_mean():
    h = hist_with([job("1", 0, 1, 100, user="a", end=100), job("2", 0, 1, 200, user="b", end=200),
                   job("3", 0, 8, 999, user="b", end=999)])
    assert rolling_estimate(job("q", 1000, 1, 0, user="new"), h, now=1000) == 150
    # no same-GPU history -> global mean
    assert rolling_estimate(job("q", 1000, 2, 0, user="new"), h, now=1000) == pytest.approx((100 + 200 + 999) / 3)


def test_rolling_known_user_new_name():
    h = hist_with([job("1", 0, 1, 50, user="a", name="train_x", end=50)])
    assert rolling_estimate(job("q", 60, 1, 0, user="a", name="completely_other"), h, now=60) == 50


def test_rolling_matched_names_decay():
    h = hist_with([job("old", 0, 1, 200, user="a", name="run1", end=300),
                   job("new", 0, 1, 100, user="a", name="run2", end=400)])
    got = rolling_estimate(job("q", 500, 1, 0, user="a", name="run3"), h, now=500, gamma=0.8)
    assert got == pytest.approx((100 + 0.8 * 200) / 1.8)
    assert got == pytest.approx(144.444, abs=1e-3)


def test_rolling_empty_history_prior():
    assert rolling_estimate(job("q", 0, 1, 0), HistoryStore(), now=0, prior=600) == 600


def test_history_no_time_travel():
    h = hist_with([job("1", 0, 1, 100, user="a", end=1000)])
    assert rolling_estimate(job("q", 500, 1, 0, user="a"), h, now=500, prior=7) == 7
    assert rolling_estimate(job("q", 1000, 1, 0, user="a"), h, now=1000, prior=7) == 100
    with pytest.raises(ValueError):
        h.advance(999)


def test_ew_mean():
    assert ew_mean([5], 0.8) == 5
    assert ew_mean([1, 1, 1], 0.5) == 1


# features

def test_calendar_monday_0930():
    t = calendar.timegm((2020, 9, 7, 9, 30, 0))  # a Monday
    f = calendar_fields([t])
    assert (f["day_of_week"][0], f["hour"][0], f["minute"][0], f["month"][0], f["day_of_month"][0]) == (0, 9, 30, 9, 7)
    # the same wall-clock time in UTC+8 happened 8 hours earlier
    g = calendar_fields([t - 8 * 3600], tz_offset=8 * 3600)
    assert (g["hour"][0], g["minute"][0]) == (9, 30)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 4_000_000_000))
def test_calendar_matches_stdlib(t):
    import datetime as dt
    d = dt.datetime.fromtimestamp(t, dt.timezone.utc)
    f = calendar_fields(t)
    assert (int(f["month"]), int(f["day_of_week"]), int(f["day_of_month"]), int(f["hour"]), int(f["minute"])) == \
        (d.month, d.weekday(), d.day, d.hour, d.minute)


def test_encoder_codes_and_unknowns():
    train = [job("1", 0, 1, 10, user="alice", vc="vcA", name="train_a"), job("2", 0, 2, 10, user="bob", vc="vcB")]
    enc = JobEncoder().fit(train)
    x = encode_features(train[0], enc)
    assert x[0] == enc.users["alice"] != UNKNOWN
    y = encode_features(job("3", 0, 4, 10, user="carol", vc="vcZ", name="qqqqqqq"), enc)
    assert y[0] == UNKNOWN and y[1] == UNKNOWN and y[2] == UNKNOWN and y[3] == 4
    again = JobEncoder.from_dict(enc.to_dict())
    assert np.array_equal(again.encode(train), enc.encode(train))


# GBDT

def test_constant_target_exact():
    X = np.random.default_rng(0).normal(size=(50, 3))
    m = train_gbdt(X, np.full(50, 7.25), GBDTConfig(rounds=5, min_samples_leaf=1))
    assert m.base == 7.25
    assert all(np.all(t.value == 0) for t in m.trees)
    assert np.all(predict_gbdt(m, np.random.default_rng(1).normal(size=(10, 3))) == 7.25)


def test_depth_one_split_exact():
    X = np.array([[-3.0], [-2.0], [-1.0], [0.0], [1.0], [2.0]])
    y = np.where(X[:, 0] < 0, 0.0, 10.0)
    m = train_gbdt(X, y, GBDTConfig(rounds=1, learning_rate=1.0, max_depth=1, min_samples_leaf=1))
    t = m.trees[0]
    assert t.feature[0] == 0 and t.threshold[0] == -0.5
    assert np.array_equal(m.predict_raw(X), y)
    assert predict_gbdt(m, [[3.0]])[0] == 10.0


def test_predict_clamps_and_checks_width():
    X = np.zeros((4, 1))
    m = train_gbdt(X, np.full(4, -5.0), GBDTConfig(rounds=1, min_samples_leaf=1))
    assert predict_gbdt(m, [[0.0]])[0] == 1.0
    with pytest.raises(ValueError):
        m.predict_raw(np.zeros((1, 2)))


def test_rounds_must_be_positive():
    with pytest.raises(ValueError):
        train_gbdt(np.zeros((3, 1)), np.zeros(3), GBDTConfig(rounds=0))


def brute_force_split(x, y, min_leaf):
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    best = (0.0, None)
    for k in range(min_leaf, len(xs) - min_leaf + 1):
        if k == 0 or k == len(xs) or xs[k - 1] == xs[k]:
            continue
        left, right = ys[:k], ys[k:]
        gain = ((ys - ys.mean()) ** 2).sum() - ((left - left.mean()) ** 2).sum() - ((right - right.mean()) ** 2).sum()
        if gain > best[0] + 1e-9:
            best = (gain, (xs[k - 1] + xs[k]) / 2)
    return best[1]


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_split_threshold_matches_brute_force(n, seed, min_leaf):
    rng = np.random.default_rng(seed)
    x = rng.permutation(n).astype(float) + rng.random()  # distinct values
    y = rng.normal(size=n) * 10
    tree = fit_tree(x[:, None], y, max_depth=1, min_samples_leaf=min_leaf)
    expect = brute_force_split(x, y, min_leaf)
    if expect is None:
        assert tree.feature[0] == -1
    else:
        assert tree.feature[0] == 0 and tree.threshold[0] == pytest.approx(expect)


def test_residual_identity_and_monotone_rmse():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(400, 4))
    y = 3 * X[:, 0] - 2 * (X[:, 1] > 0) + rng.normal(scale=0.3, size=400)
    errs = []

    def cb(k, model, pred):
        assert np.allclose(pred, model.predict_raw(X))
        errs.append(rmse(y, pred))

    train_gbdt(X, y, GBDTConfig(rounds=30, max_depth=3, min_samples_leaf=5), cb)
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_update_model():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(300, 2))
    y = X[:, 0] * 5
    m = train_gbdt(X, y, GBDTConfig(rounds=20, min_samples_leaf=5))
    same = update_model(m, np.zeros((0, 2)), np.zeros(0))
    assert same.rounds == m.rounds and np.array_equal(same.predict_raw(X), m.predict_raw(X))
    once = update_model(m, X, y, rounds=5)
    twice = update_model(once, X, y, rounds=5)
    assert (once.rounds, twice.rounds) == (m.rounds + 5, m.rounds + 10)
    assert m.rounds == 20  # original untouched


def test_update_adapts_to_shift():
    rng = np.random.default_rng(5)
    X = rng.integers(0, 5, size=(500, 2)).astype(float)
    base = 100 * (1 + X[:, 0])
    m = train_gbdt(X, base, GBDTConfig(rounds=50, min_samples_leaf=5))
    shifted = base * 10
    Xn = rng.integers(0, 5, size=(300, 2)).astype(float)
    yn = 1000 * (1 + Xn[:, 0])
    before = smape(yn, predict_gbdt(m, Xn))
    after = smape(yn, predict_gbdt(update_model(m, X, shifted, rounds=50), Xn))
    assert after < before


def test_gbdt_round_trip():
    X = np.random.default_rng(6).normal(size=(100, 3))
    m = train_gbdt(X, X[:, 0] ** 2, GBDTConfig(rounds=10, min_samples_leaf=3))
    from gpusim.predictor import GBDTModel
    assert np.array_equal(GBDTModel.from_dict(m.to_dict()).predict_raw(X), m.predict_raw(X))


# duration model

def trace_with_times(n=2000, seed=0):
    jobs = synth_trace(SynthParams(job_count=n, seed=seed, span_days=20))
    from dataclasses import replace
    return [replace(j, start_time=j.submit_time, end_time=j.submit_time + j.duration) for j in jobs]


def test_duration_model_learns_names(tmp_path):
    jobs = trace_with_times()
    split = split_by_time(jobs, jobs[0].submit_time + 15 * 86400)
    assert all(j.end_time < jobs[0].submit_time + 15 * 86400 for j in split.train)
    model = DurationModel.fit(split.train, GBDTConfig(rounds=60))
    ev = model.evaluate(split.test)
    # a constant predictor at the training median is the baseline to beat
    med = np.median([j.duration for j in split.train])
    base = smape([j.duration for j in split.test], np.full(len(split.test), med))
    assert math.isfinite(ev["rmse"]) and ev["smape"] < base
    p = tmp_path / "m.json"
    model.save(p)
    again = DurationModel.load(p)
    assert np.array_equal(again.predict(split.test), model.predict(split.test))
    assert np.all(model.predict(split.test) >= 1)


def test_duration_model_update_window():
    jobs = trace_with_times(600, seed=2)
    model = DurationModel.fit(jobs[:300], GBDTConfig(rounds=10))
    newer = model.update(jobs[300:], rounds=3)
    assert newer.gbdt.rounds == 13 and model.gbdt.rounds == 10
    assert model.update([], rounds=3) is model


# scoring

def test_smape_examples():
    assert smape([1, 2, 3], [1, 2, 3]) == 0
    assert smape([100], [110]) == pytest.approx(100 * 10 / 105)
    assert smape([0, 100], [0, 110]) == pytest.approx(100 * 10 / 105)
    with pytest.raises(ValueError):
        smape([], [])
