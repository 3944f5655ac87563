"""Command-line entry point: ``gpusim {synth,analyze,simulate,train,forecast,ces,rerun}``.

Every command writes its outputs plus ``manifest.json`` into ``--out``. The
manifest records input hashes, the resolved configuration, the seed and
output hashes; ``gpusim rerun manifest.json`` repeats the run and verifies
the outputs are byte-identical.

A ``--config`` file holds flat ``key = value`` lines whose keys are the
long flag names (dashes or underscores). Flags given on the command line
override the file.
"""
from __future__ import annotations

import argparse
import functools
import hashlib
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

from . import __version__
from .analytics import fill_times as analytics_fill_times
from .trace import ClusterSpec, JobRecord, SynthParams, TraceFormatError, load_jobs, serialize_jobs, synth_trace

logger = logging.getLogger("gpusim")

MANIFEST = "manifest.json"


class UsageError(Exception):
    """Bad input from the user; reported without a traceback, exit code 2."""


# ---------------------------------------------------------------- helpers

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _parse_time(text, tz_offset: int = 0) -> int | None:
    """Epoch seconds from an integer or an ISO date/datetime in local time."""
    if text is None or text == "":
        return None
    s = str(text).strip()
    if s.lstrip("-").isdigit():
        return int(s)
    try:
        ts = pd.Timestamp(s)
    except ValueError as e:
        raise UsageError(f"cannot parse time {s!r}") from e
    if ts.tzinfo is not None:
        return int(ts.timestamp())
    return int((ts - pd.Timestamp(0)) // pd.Timedelta(seconds=1)) - tz_offset


def _write(outdir, name, text: str, written: list):
    with open(os.path.join(outdir, name), "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    written.append(name)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _load_trace(args) -> list[JobRecord]:
    if not args.trace:
        raise UsageError("--trace is required")
    if not os.path.exists(args.trace):
        raise UsageError(f"trace not found: {args.trace}")
    if args.trace_format == "helios":
        from .adapters import read_helios_jobs
        jobs, rejects = read_helios_jobs(args.trace, args.tz_offset)
    else:
        jobs = load_jobs(args.trace)
        rejects = []
    if rejects:
        logger.warning("%d trace rows rejected", len(rejects))
    if getattr(args, "merge_attempts", False):
        from .adapters import merge_attempts
        jobs = merge_attempts(jobs)
    return jobs


def _load_cluster(args, required=True) -> ClusterSpec | None:
    if not args.cluster:
        if required:
            raise UsageError("--cluster is required")
        return None
    if not os.path.exists(args.cluster):
        raise UsageError(f"cluster spec not found: {args.cluster}")
    return ClusterSpec.load(args.cluster)


def _inputs(args, *names) -> dict[str, str]:
    out = {}
    for n in names:
        p = getattr(args, n, None)
        if p:
            out[p] = _sha256(p)
    return out


def _node_series(args, jobs=None, cluster=None):
    from .ces import NodeSeries, node_series_from_result
    if args.series:
        if not os.path.exists(args.series):
            raise UsageError(f"node series not found: {args.series}")
        with open(args.series, encoding="utf-8") as f:
            return NodeSeries.from_csv(f)
    if args.philly:
        from .adapters import philly_node_series
        return philly_node_series(args.philly)
    from .schedulers import FIFOPolicy
    from .sim import place_recorded, run_simulation
    jobs = jobs if jobs is not None else _load_trace(args)
    cluster = cluster or _load_cluster(args)
    gpu_jobs = [j for j in jobs if j.gpu_num > 0]
    source = args.node_source
    if source == "auto":
        source = "recorded" if gpu_jobs and all(j.end_time is not None for j in gpu_jobs) else "fifo"
    if source == "recorded":
        res = place_recorded(gpu_jobs, cluster).result
    else:
        res = run_simulation(jobs, cluster, FIFOPolicy())
    return node_series_from_result(res)


def _forecast_config(args):
    from .ces import ForecastConfig, load_holidays
    from .predictor import GBDTConfig
    hol = load_holidays(args.holidays) if args.holidays else frozenset()
    return ForecastConfig(resolution=args.resolution, holidays=hol, tz_offset=args.tz_offset,
                          gbdt=GBDTConfig(args.rounds, args.learning_rate, args.max_depth, args.min_leaf))


def _fit_forecaster(series, train_until: int, cfg):
    from .ces import NodeForecaster, resample
    factor = cfg.resolution // 60
    k = min(series.index(train_until), len(series))
    k -= k % factor
    if k <= 0:
        raise UsageError("no node history before the training cutoff")
    values = resample(series.running[:k], factor)
    try:
        return NodeForecaster.fit(values, series.start, cfg, cap=float(series.total.max()))
    except ValueError as e:
        raise UsageError(str(e)) from e


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> tuple[list, dict]:
    gpu_dist = {int(k): float(v) for k, v in (p.split(":") for p in args.gpu_dist.split(","))}
    params = SynthParams(job_count=args.jobs, seed=args.seed,
                         start_time=_parse_time(args.start, args.tz_offset), span_days=args.days,
                         cpu_job_fraction=args.cpu_fraction, users=args.users,
                         vcs=tuple(args.vcs.split(",")), gpu_dist=gpu_dist)
    try:
        jobs = synth_trace(params)
    except ValueError as e:
        raise UsageError(str(e)) from e
    written = []
    _write(args.out, "trace.csv", serialize_jobs(jobs), written)
    vcs = params.vcs
    per = args.nodes // len(vcs)
    from .trace import VCConfig
    cluster = ClusterSpec("synthetic", args.nodes, args.gpus_per_node,
                          [VCConfig(v, per + (1 if i < args.nodes - per * len(vcs) else 0))
                           for i, v in enumerate(vcs)])
    _write(args.out, "cluster.json", cluster.to_json() + "\n", written)
    return written, {}


def cmd_analyze(args):
    from . import analytics
    jobs = _load_trace(args)
    cluster = _load_cluster(args)
    timed = analytics.fill_times(jobs, cluster)
    written = analytics.write_report(timed, cluster, args.out, svg=not args.no_svg, tz_offset=args.tz_offset)
    _write(args.out, "summary.json", _json(analytics.summary(jobs)), written)
    return written, _inputs(args, "trace", "cluster")


def _make_qssf(model_path, lam, gamma, prior, tau, seed_jobs, update_rounds):
    from .predictor import DurationModel, HistoryStore
    from .schedulers import QSSFPolicy
    model = DurationModel.load(model_path) if model_path else None
    hist = HistoryStore(tau)
    for j in seed_jobs:
        hist.add(j)
    return QSSFPolicy(history=hist, model=model, lam=lam, gamma=gamma, prior=prior,
                      update_rounds=update_rounds)


def _policy_factory(name, args, seed_jobs):
    from .schedulers import make_policy
    if name == "qssf":
        if not args.model:
            raise UsageError("qssf needs --model (train one with `gpusim train`)")
        return functools.partial(_make_qssf, args.model, args.lam, args.gamma, args.prior, args.tau,
                                 seed_jobs, args.update_rounds)
    if name == "qssf-noisy":
        return functools.partial(make_policy, name, sigma=args.noise_sigma, seed=args.seed)
    if name == "qssf-oracle":
        return functools.partial(make_policy, name, lam=args.lam)
    try:
        make_policy(name)
    except ValueError as e:
        raise UsageError(str(e)) from e
    return functools.partial(make_policy, name)


def cmd_simulate(args):
    from .sim import SimOptions, check_result, compute_metrics, run_many
    from .sim.metrics import jobs_csv, summary_json, utilization_csv
    jobs = _load_trace(args)
    cluster = _load_cluster(args)
    names = [p.strip() for p in (args.policies or args.policy).split(",") if p.strip()]
    eval_start = _parse_time(args.eval_start, args.tz_offset)
    seed_jobs = []
    if eval_start is not None:
        seed_jobs = [j for j in jobs if j.end_time is not None and j.end_time < eval_start]
        jobs = [j for j in jobs if j.submit_time >= eval_start]
    eval_end = _parse_time(args.eval_end, args.tz_offset)
    if eval_end is not None:
        jobs = [j for j in jobs if j.submit_time < eval_end]
    if not jobs:
        raise UsageError("no jobs to replay")
    factories = {n: _policy_factory(n, args, seed_jobs) for n in names}
    options = SimOptions(tick_period=args.tick_period, check_invariants=True)
    results = run_many(jobs, cluster, factories, options, workers=args.workers)
    written, rows = [], []
    for name in names:
        res = results[name]
        check_result(res)
        m = compute_metrics(res, args.queue_threshold)
        _write(args.out, f"jobs_{name}.csv", jobs_csv(res), written)
        _write(args.out, f"utilization_{name}.csv", utilization_csv(res), written)
        _write(args.out, f"summary_{name}.json", summary_json(m), written)
        rows.append((name, "ALL", m.jobs, m.avg_jct, m.avg_queuing, m.queued_job_count))
        for vc, g in sorted(m.per_vc.items()):
            rows.append((name, vc, g.jobs, g.avg_jct, g.avg_queuing, g.queued_job_count))
    table = pd.DataFrame(rows, columns=["policy", "vc", "jobs", "avg_jct", "avg_queuing", "queued_jobs"])
    _write(args.out, "summary.csv", table.to_csv(index=False, lineterminator="\n", float_format="%.6f"), written)
    return written, _inputs(args, "trace", "cluster", "model")


def cmd_train(args):
    from .predictor import DurationModel, GBDTConfig, split_by_time
    jobs = [j for j in _load_trace(args) if j.gpu_num > 0]
    cluster = _load_cluster(args, required=False)
    jobs = analytics_fill_times(jobs, cluster)
    cutoff = _parse_time(args.cutoff, args.tz_offset)
    if cutoff is None:
        raise UsageError("--cutoff is required")
    split = split_by_time(jobs, cutoff)
    if not split.train:
        raise UsageError("no jobs finished before the cutoff; training set is empty")
    cfg = GBDTConfig(args.rounds, args.learning_rate, args.max_depth, args.min_leaf)
    model = DurationModel.fit(split.train, cfg, tau=args.tau, tz_offset=args.tz_offset)
    report = {"train_jobs": len(split.train), "cutoff": cutoff}
    if split.test:
        report["validation"] = model.evaluate(split.test)
    report["train"] = model.evaluate(split.train)
    written = []
    model_path = os.path.join(args.out, "model.json")
    model.save(model_path)
    written.append("model.json")
    _write(args.out, "validation.json", _json(report), written)
    logger.info("validation: %s", report.get("validation"))
    return written, _inputs(args, "trace", "cluster")


def cmd_forecast(args):
    from .ces import forecast_running_nodes, resample
    series = _node_series(args)
    cfg = _forecast_config(args)
    train_until = _parse_time(args.train_until, args.tz_offset)
    if train_until is None:
        raise UsageError("--train-until is required")
    fc = _fit_forecaster(series, train_until, cfg)
    factor = cfg.resolution // 60
    k = series.index(train_until)
    hist = resample(series.running[:k - k % factor], factor)
    pred = forecast_running_nodes(fc, hist, fc.trained_until, args.horizon)
    times = fc.trained_until + cfg.resolution * np.arange(len(pred))
    written = []
    _write(args.out, "forecast.csv", pd.DataFrame({"time": times, "running": pred}).to_csv(
        index=False, lineterminator="\n", float_format="%.6f"), written)
    fc.save(os.path.join(args.out, "forecaster.json"))
    written.append("forecaster.json")
    full = resample(series.running, factor)
    split = len(hist)
    if split < len(full):
        bt = fc.backtest(full, series.start, split, fc.cfg.steps(args.horizon))
        _write(args.out, "backtest.json", _json({"smape": bt["smape"], "steps": len(bt["actual"])}), written)
    return written, _inputs(args, "trace", "cluster", "series", "philly", "holidays")


def cmd_ces(args):
    from .ces import CESConfig, EnergyModel, NodeForecaster, run_ces_simulation
    series = _node_series(args)
    cfg = CESConfig(buffer_nodes=args.buffer_nodes, history_threshold=args.history_threshold,
                    forecast_threshold=args.forecast_threshold, check_period=args.check_period,
                    history_window=args.history_window, forecast_horizon=args.horizon,
                    boot_delay=args.boot_delay)
    eval_start = _parse_time(args.eval_start, args.tz_offset)
    eval_end = _parse_time(args.eval_end, args.tz_offset)
    if eval_start is None or eval_end is None:
        raise UsageError("--eval-start and --eval-end are required")
    fc = None
    if args.mode == "ces":
        if args.forecaster:
            fc = NodeForecaster.load(args.forecaster)
        else:
            fc = _fit_forecaster(series, eval_start, _forecast_config(args))
    try:
        rep = run_ces_simulation(series, cfg, fc, eval_start, eval_end, args.mode,
                                 EnergyModel(args.idle_watts, args.cooling))
    except ValueError as e:
        raise UsageError(str(e)) from e
    written = []
    _write(args.out, "report.json", rep.to_json() + "\n", written)
    _write(args.out, "timeline.csv", rep.timeline_csv(), written)
    return written, _inputs(args, "trace", "cluster", "series", "philly", "forecaster", "holidays")


COMMANDS = {"synth": cmd_synth, "analyze": cmd_analyze, "simulate": cmd_simulate,
            "train": cmd_train, "forecast": cmd_forecast, "ces": cmd_ces}


# ---------------------------------------------------------------- parser

def _common(p):
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--out", required=False, help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=0, help="top-level random seed")
    p.add_argument("--trace", help="job trace CSV")
    p.add_argument("--trace-format", choices=("canonical", "helios"), default="canonical")
    p.add_argument("--cluster", help="cluster spec JSON")
    p.add_argument("--tz-offset", type=int, default=0, help="trace local time minus UTC, seconds")
    p.add_argument("-v", "--verbose", action="store_true")


def _gbdt_flags(p, rounds):
    p.add_argument("--rounds", type=int, default=rounds)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--min-leaf", type=int, default=20)


def _series_flags(p):
    p.add_argument("--series", help="node series CSV (minute,total,running)")
    p.add_argument("--philly", help="Philly per-minute GPU utilization CSV")
    p.add_argument("--node-source", choices=("auto", "recorded", "fifo"), default="auto",
                   help="node occupancy from recorded job times or a FIFO replay (auto: recorded when every job has one)")
    p.add_argument("--holidays", help="file with one ISO holiday date per line")
    p.add_argument("--resolution", type=int, default=600, help="forecast step, seconds")
    _gbdt_flags(p, 100)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gpusim", description="GPU cluster trace analysis and scheduling simulation")
    ap.add_argument("--version", action="version", version=f"gpusim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic trace and matching cluster spec")
    _common(p)
    p.add_argument("--jobs", type=int, default=1000)
    p.add_argument("--days", type=float, default=7.0)
    p.add_argument("--start", default="2020-09-01")
    p.add_argument("--users", type=int, default=20)
    p.add_argument("--vcs", default="vc0,vc1")
    p.add_argument("--cpu-fraction", type=float, default=0.0)
    p.add_argument("--gpu-dist", default="1:0.55,2:0.15,4:0.12,8:0.13,16:0.05", help="gpus:prob,...")
    p.add_argument("--nodes", type=int, default=8)
    p.add_argument("--gpus-per-node", type=int, default=8)

    p = sub.add_parser("analyze", help="characterization report for a trace")
    _common(p)
    p.add_argument("--no-svg", action="store_true")
    p.add_argument("--merge-attempts", action="store_true", help="collapse <id>#<k> attempt rows")

    p = sub.add_parser("simulate", help="replay a trace under one or more policies")
    _common(p)
    p.add_argument("--policy", default="fifo", help="fifo, sjf, srtf, qssf, qssf-oracle or qssf-noisy")
    p.add_argument("--policies", help="comma-separated list; runs are independent")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5, help="QSSF merging coefficient")
    p.add_argument("--gamma", type=float, default=0.8, help="rolling-estimate decay")
    p.add_argument("--prior", type=float, default=600.0, help="duration prior for unknown users, s")
    p.add_argument("--tau", type=float, default=0.3, help="name-similarity threshold")
    p.add_argument("--model", help="duration model JSON from `gpusim train`")
    p.add_argument("--update-rounds", type=int, default=10)
    p.add_argument("--tick-period", type=int, default=None, help="seconds between model updates")
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--eval-start", help="replay jobs submitted from here; earlier ones seed history")
    p.add_argument("--eval-end")
    p.add_argument("--queue-threshold", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("train", help="train the duration model")
    _common(p)
    p.add_argument("--cutoff", help="train on jobs ending before this time")
    p.add_argument("--tau", type=float, default=0.3)
    _gbdt_flags(p, 200)

    p = sub.add_parser("forecast", help="train the node forecaster and forecast a horizon")
    _common(p)
    _series_flags(p)
    p.add_argument("--train-until", help="end of training data")
    p.add_argument("--horizon", type=int, default=3 * 3600, help="seconds")

    p = sub.add_parser("ces", help="simulate the node sleep/wake controller")
    _common(p)
    _series_flags(p)
    p.add_argument("--mode", choices=("ces", "vanilla", "disabled"), default="ces")
    p.add_argument("--forecaster", help="forecaster JSON; trained on data before --eval-start if omitted")
    p.add_argument("--eval-start")
    p.add_argument("--eval-end")
    p.add_argument("--buffer-nodes", type=int, default=3)
    p.add_argument("--history-threshold", type=float, default=2.0)
    p.add_argument("--forecast-threshold", type=float, default=2.0)
    p.add_argument("--check-period", type=int, default=600)
    p.add_argument("--history-window", type=int, default=3600)
    p.add_argument("--horizon", type=int, default=3 * 3600)
    p.add_argument("--boot-delay", type=int, default=300)
    p.add_argument("--idle-watts", type=float, default=800.0)
    p.add_argument("--cooling", type=float, default=2.0, help="cooling power as a multiple of server power")

    p = sub.add_parser("rerun", help="repeat the run recorded in a manifest and verify outputs")
    p.add_argument("manifest")
    p.add_argument("--out", help="directory for the new outputs (default: a temp dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


def read_config(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def _apply_config(parser: argparse.ArgumentParser, sub: argparse.ArgumentParser, argv, cfg: dict):
    dests = {a.dest: a for a in sub._actions}
    aliases = {"lambda": "lam"}
    defaults = {}
    for k, v in cfg.items():
        k = aliases.get(k, k)
        if k not in dests or k in ("config", "help"):
            raise UsageError(f"unknown config key {k!r}")
        a = dests[k]
        if isinstance(a, argparse._StoreTrueAction):
            defaults[k] = v.lower() in ("1", "true", "yes", "on")
        else:
            defaults[k] = a.type(v) if a.type else v
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _subparser(parser, name):
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[name]
    raise KeyError(name)


def run(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "rerun":
            return _rerun(args)
        if args.config:
            if not os.path.exists(args.config):
                raise UsageError(f"config not found: {args.config}")
            args = _apply_config(parser, _subparser(parser, args.command), argv, read_config(args.config))
        if not args.out:
            raise UsageError("--out is required")
        execute(args)
    except (UsageError, TraceFormatError) as e:
        print(f"gpusim: error: {e}", file=sys.stderr)
        return 2
    except AssertionError as e:
        print(f"gpusim: invariant violated: {e}", file=sys.stderr)
        return 1
    return 0


def execute(args) -> dict:
    """Run the command described by ``args`` and write its manifest; return the manifest."""
    os.makedirs(args.out, exist_ok=True)
    written, inputs = COMMANDS[args.command](args)
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "verbose", "config")}
    manifest = {
        "tool": "gpusim", "version": __version__, "command": args.command, "seed": args.seed,
        "config": config, "inputs": inputs,
        "outputs": {name: _sha256(os.path.join(args.out, name)) for name in sorted(written)},
    }
    with open(os.path.join(args.out, MANIFEST), "w", encoding="utf-8", newline="\n") as f:
        f.write(_json(manifest))
    return manifest


def _rerun(args) -> int:
    import tempfile
    with open(args.manifest, encoding="utf-8") as f:
        old = json.load(f)
    for path, digest in old["inputs"].items():
        if not os.path.exists(path) or _sha256(path) != digest:
            raise UsageError(f"input changed or missing: {path}")
    ns = argparse.Namespace(**old["config"], out=args.out or tempfile.mkdtemp(prefix="gpusim-"),
                            verbose=args.verbose, config=None)
    new = execute(ns)
    diff = sorted(k for k in old["outputs"] if new["outputs"].get(k) != old["outputs"][k])
    if diff:
        print(f"gpusim: outputs differ: {', '.join(diff)}", file=sys.stderr)
        return 1
    print(f"reproduced {len(old['outputs'])} outputs in {ns.out}")
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
