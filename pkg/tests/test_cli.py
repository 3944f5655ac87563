import json
import subprocess
import sys

import pandas as pd
import pytest
from conftest import cluster, job

from gpusim.ces import synthetic_node_series
from gpusim.cli import run
from gpusim.trace import serialize_jobs


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert run(["synth", "--out", str(d), "--jobs", "400", "--days", "4", "--nodes", "4", "--seed", "7",
                "--cpu-fraction", "0.1"]) == 0
    return d


@pytest.fixture()
def hand(tmp_path):
    (tmp_path / "trace.csv").write_text(serialize_jobs([job("A", 0, 8, 100), job("B", 0, 8, 10)]))
    (tmp_path / "cluster.json").write_text(cluster(1).to_json())
    return tmp_path


@pytest.fixture(scope="module")
def series_csv(tmp_path_factory):
    p = tmp_path_factory.mktemp("series") / "series.csv"
    p.write_text(synthetic_node_series(12, 60, 35, 12, seed=3, noise=0.5).to_csv())
    return p


def files(d):
    return json.loads((d / "manifest.json").read_text())["outputs"]


def test_synth_writes_trace_and_cluster(synth_dir):
    assert set(files(synth_dir)) == {"trace.csv", "cluster.json"}
    assert len(pd.read_csv(synth_dir / "trace.csv")) == 400


def test_analyze_is_deterministic(synth_dir, tmp_path):
    args = ["analyze", "--trace", str(synth_dir / "trace.csv"), "--cluster", str(synth_dir / "cluster.json")]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert a == b
    for n in ("utilization.csv", "cdf_duration_gpu.csv", "demand_breakdown.csv", "status.csv", "users.csv",
              "summary.json", "utilization_hourly.svg"):
        assert n in a
    assert pd.read_csv(tmp_path / "a" / "utilization.csv")["utilization"].max() > 0


def test_simulate_hand_trace(hand):
    out = hand / "out"
    assert run(["simulate", "--trace", str(hand / "trace.csv"), "--cluster", str(hand / "cluster.json"),
                "--policies", "fifo,sjf", "--out", str(out)]) == 0
    s = pd.read_csv(out / "summary.csv").query("vc == 'ALL'").set_index("policy")
    assert s.loc["fifo", "avg_jct"] == 105 and s.loc["sjf", "avg_jct"] == 60
    jobs = pd.read_csv(out / "jobs_sjf.csv").set_index("job_id")
    assert jobs.loc["B", "end"] == 10


def test_usage_errors_exit_2(hand, tmp_path, capsys):
    base = ["--trace", str(hand / "trace.csv"), "--cluster", str(hand / "cluster.json"), "--out", str(tmp_path)]
    assert run(["simulate", "--policy", "lottery"] + base) == 2
    assert run(["simulate", "--policy", "qssf"] + base) == 2
    assert run(["simulate", "--trace", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 2
    assert run(["train", "--cutoff", "-5"] + base) == 2
    assert "error" in capsys.readouterr().err


def test_train_and_simulate_qssf(synth_dir, tmp_path):
    trace, cl = str(synth_dir / "trace.csv"), str(synth_dir / "cluster.json")
    df = pd.read_csv(trace)
    cutoff = int(df["submit_time"].quantile(0.6))
    assert run(["train", "--trace", trace, "--cluster", cl, "--cutoff", str(cutoff), "--rounds", "30",
                "--out", str(tmp_path / "m")]) == 0
    rep = json.loads((tmp_path / "m" / "validation.json").read_text())
    assert rep["train_jobs"] > 0 and rep["validation"]["rmse"] == pytest.approx(rep["validation"]["rmse"])
    assert run(["simulate", "--trace", trace, "--cluster", cl, "--policy", "qssf",
                "--model", str(tmp_path / "m" / "model.json"), "--eval-start", str(cutoff),
                "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "summary_qssf.json").exists()


def test_forecast_horizon(series_csv, tmp_path):
    start = int(pd.read_csv(series_csv)["minute"].iloc[0])
    assert run(["forecast", "--series", str(series_csv), "--train-until", str(start + 10 * 86400),
                "--rounds", "30", "--out", str(tmp_path)]) == 0
    f = pd.read_csv(tmp_path / "forecast.csv")
    assert len(f) == 18 and f["running"].between(0, 60).all()


def test_ces_modes(series_csv, tmp_path):
    start = int(pd.read_csv(series_csv)["minute"].iloc[0])
    window = ["--eval-start", str(start + 10 * 86400), "--eval-end", str(start + 12 * 86400)]
    assert run(["ces", "--series", str(series_csv), "--mode", "disabled", "--out", str(tmp_path / "d")] + window) == 0
    rep = json.loads((tmp_path / "d" / "report.json").read_text())
    assert rep["avg_sleeping_nodes"] == 0 and rep["energy_kwh"] == 0
    assert run(["ces", "--series", str(series_csv), "--rounds", "30", "--out", str(tmp_path / "c")] + window) == 0
    rep = json.loads((tmp_path / "c" / "report.json").read_text())
    assert rep["avg_sleeping_nodes"] > 0 and rep["utilization_ces"] > rep["utilization_original"]


def test_config_file_and_flag_override(hand, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# hand trace\npolicy = sjf\ntrace = {hand / 'trace.csv'}\ncluster = {hand / 'cluster.json'}\n")
    assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert (tmp_path / "a" / "summary_sjf.json").exists()
    assert run(["simulate", "--config", str(cfg), "--policy", "fifo", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "summary_fifo.json").exists()
    cfg.write_text("colour = blue\n")
    assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 2


def test_rerun_reproduces(hand, tmp_path):
    out = tmp_path / "first"
    assert run(["simulate", "--trace", str(hand / "trace.csv"), "--cluster", str(hand / "cluster.json"),
                "--policies", "fifo,srtf", "--out", str(out)]) == 0
    assert run(["rerun", str(out / "manifest.json"), "--out", str(tmp_path / "again")]) == 0
    (hand / "trace.csv").write_text(serialize_jobs([job("A", 0, 8, 99)]))
    assert run(["rerun", str(out / "manifest.json"), "--out", str(tmp_path / "third")]) == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "gpusim.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("synth", "analyze", "simulate", "train", "forecast", "ces", "rerun"):
        assert cmd in r.stdout
