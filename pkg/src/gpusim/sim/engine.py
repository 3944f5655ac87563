"""Trace replay engine.

A single run walks a total order of events. All events sharing a timestamp
are applied before any VC is scheduled, so jobs arriving together compete
on priority rather than on arrival order.
"""
from __future__ import annotations

import bisect
import enum
import heapq
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

from ..trace import ClusterSpec, JobRecord
from .placement import SimNode, consolidate_allocate

logger = logging.getLogger(__name__)

ALL_VCS = "*"


class EventKind(enum.IntEnum):
    # value is the tie-break order at equal timestamps
    JOB_END = 0
    JOB_SUBMIT = 1
    PERIODIC_TICK = 2


@dataclass(order=True, frozen=True)
class SimEvent:
    time: int
    kind: EventKind
    payload: str = ""
    version: int = 0


class Policy(Protocol):
    name: str
    preemptive: bool

    def priority(self, job: JobRecord, now: int) -> float: ...


@dataclass
class Segment:
    start: int
    end: int
    placement: dict[int, int]


@dataclass
class JobOutcome:
    job_id: str
    vc: str
    gpu_num: int
    duration: int
    submit: int
    start: int | None = None
    end: int | None = None
    segments: list[Segment] = field(default_factory=list)

    @property
    def jct(self) -> int:
        return self.end - self.submit

    @property
    def queuing(self) -> int:
        """Time spent waiting: equals ``start - submit`` unless the job was preempted."""
        return self.end - self.submit - self.duration

    @property
    def nodes(self) -> list[int]:
        return sorted({n for s in self.segments for n in s.placement})


@dataclass
class SimResult:
    policy: str
    outcomes: list[JobOutcome]
    unschedulable: list[str]
    vc_gpus: dict[str, int]
    vc_nodes: dict[str, list[int]]
    gpus_per_node: int
    preemptions: int = 0

    @property
    def total_gpus(self) -> int:
        return sum(self.vc_gpus.values())

    def by_id(self) -> dict[str, JobOutcome]:
        return {o.job_id: o for o in self.outcomes}


@dataclass
class SimOptions:
    vc_time: int | None = None  # VC snapshot time; defaults to the first submit
    tick_period: int | None = None
    check_invariants: bool = True


@dataclass
class _Running:
    job: JobRecord
    started: int
    remaining: int  # remaining service at ``started``
    placement: dict[int, int]
    version: int

    def remaining_at(self, t: int) -> int:
        return self.remaining - (t - self.started)


class _VCState:
    def __init__(self, name: str, nodes: list[SimNode]):
        self.name = name
        self.nodes = nodes
        self.by_id = {n.node_id: n for n in nodes}
        self.capacity = sum(n.total_gpus for n in nodes)
        # entries are (priority, submit_time, job_id, job)
        self.pending: list[tuple] = []
        self.running: dict[str, _Running] = {}

    def push(self, key: float, job: JobRecord):
        bisect.insort(self.pending, (key, job.submit_time, job.job_id, job))

    def place(self, placement: dict[int, int]):
        for nid, g in placement.items():
            self.by_id[nid].allocate(g)

    def release(self, placement: dict[int, int]):
        for nid, g in placement.items():
            self.by_id[nid].release(g)


def schedule_vc(queue: Sequence[JobRecord], nodes: list[SimNode]) -> list[tuple[JobRecord, dict[int, int]]]:
    """Start jobs from the front of ``queue`` (already in priority order) until one does not fit.

    Placements are allocated on ``nodes``. The first job that cannot be
    placed blocks everything behind it.
    """
    started = []
    for job in queue:
        placement = consolidate_allocate(job.gpu_num, nodes)
        if placement is None:
            break
        by_id = {n.node_id: n for n in nodes}
        for nid, g in placement.items():
            by_id[nid].allocate(g)
        started.append((job, placement))
    return started


def build_vcs(cluster: ClusterSpec, at: int) -> dict[str, _VCState]:
    """Partition nodes among VCs using the configuration in effect at ``at``.

    A cluster with no VC entries is treated as one shared pool.
    """
    sizes = cluster.vc_nodes_at(at) if cluster.vcs else {ALL_VCS: cluster.nodes}
    vcs = {}
    nid = 0
    for vc in sorted(sizes):
        nodes = []
        for _ in range(sizes[vc]):
            nodes.append(SimNode(nid, vc, cluster.gpus_per_node, cluster.gpus_per_node))
            nid += 1
        vcs[vc] = _VCState(vc, nodes)
    return vcs


def run_simulation(jobs: Iterable[JobRecord], cluster: ClusterSpec, policy: Policy,
                   options: SimOptions | None = None) -> SimResult:
    """Replay ``jobs`` on ``cluster`` under ``policy`` and return per-job outcomes.

    Every replayed job runs for exactly its trace ``duration`` (in one piece
    for non-preemptive policies, possibly split across segments under a
    preemptive one). Jobs that can never fit their VC are listed in
    ``unschedulable`` and left out of the outcomes.
    """
    opts = options or SimOptions()
    jobs = [j for j in jobs if j.gpu_num > 0]  # CPU-only jobs never touch GPUs
    jobs.sort(key=lambda j: (j.submit_time, j.job_id))
    at = opts.vc_time if opts.vc_time is not None else (jobs[0].submit_time if jobs else 0)
    vcs = build_vcs(cluster, at)
    shared = not cluster.vcs

    outcomes: dict[str, JobOutcome] = {}
    unschedulable: list[str] = []
    heap: list[SimEvent] = []
    job_of: dict[str, JobRecord] = {}
    for j in jobs:
        vc = vcs.get(ALL_VCS if shared else j.vc)
        if vc is None or j.gpu_num > vc.capacity:
            unschedulable.append(j.job_id)
            continue
        job_of[j.job_id] = j
        outcomes[j.job_id] = JobOutcome(j.job_id, j.vc, j.gpu_num, j.duration, j.submit_time)
        heap.append(SimEvent(j.submit_time, EventKind.JOB_SUBMIT, j.job_id))
    if unschedulable:
        logger.warning("%d jobs exceed their VC capacity and are not replayed", len(unschedulable))
    if opts.tick_period and heap:
        heap.append(SimEvent(min(e.time for e in heap), EventKind.PERIODIC_TICK))
    heapq.heapify(heap)

    preemptive = getattr(policy, "preemptive", False)
    versions: dict[str, int] = {}
    stats = {"preemptions": 0}

    def vc_for(job):
        return vcs[ALL_VCS if shared else job.vc]

    def start(vc: _VCState, job: JobRecord, placement, now, remaining, placed=False):
        if not placed:
            vc.place(placement)
        ver = versions.get(job.job_id, 0) + 1
        versions[job.job_id] = ver
        vc.running[job.job_id] = _Running(job, now, remaining, placement, ver)
        out = outcomes[job.job_id]
        if out.start is None:
            out.start = now
        out.segments.append(Segment(now, now + remaining, placement))
        heapq.heappush(heap, SimEvent(now + remaining, EventKind.JOB_END, job.job_id, ver))

    def schedule(vc: _VCState, now: int):
        if preemptive:
            _schedule_preemptive(vc, now)
            return
        ready = schedule_vc([e[3] for e in vc.pending], vc.nodes)
        del vc.pending[:len(ready)]
        for job, placement in ready:
            start(vc, job, placement, now, job.duration, placed=True)

    def _schedule_preemptive(vc: _VCState, now: int):
        while vc.pending:
            rem, _, _, job = vc.pending[0]
            placement = consolidate_allocate(job.gpu_num, vc.nodes)
            if placement is None:
                victims = _pick_victims(vc, job, rem, now)
                if victims is None:
                    break
                for r in victims:
                    vc.release(r.placement)
                    del vc.running[r.job.job_id]
                    left = r.remaining_at(now)
                    seg = outcomes[r.job.job_id].segments[-1]
                    seg.end = now
                    if seg.end == seg.start:
                        outcomes[r.job.job_id].segments.pop()
                    vc.push(left, r.job)
                    stats["preemptions"] += 1
                placement = consolidate_allocate(job.gpu_num, vc.nodes)
                assert placement is not None
                # the victims were pushed behind the head, so it is still first
                assert vc.pending[0][3] is job
            vc.pending.pop(0)
            start(vc, job, placement, now, rem)

    def _pick_victims(vc: _VCState, job: JobRecord, rem: int, now: int):
        cands = [r for r in vc.running.values() if r.remaining_at(now) > rem]
        if not cands:
            return None
        cands.sort(key=lambda r: (-r.remaining_at(now), -r.job.submit_time, r.job.job_id))
        free = {n.node_id: n.free_gpus for n in vc.nodes}

        def fits(chosen):
            trial = dict(free)
            for r in chosen:
                for nid, g in r.placement.items():
                    trial[nid] += g
            nodes = [SimNode(n.node_id, n.vc, n.total_gpus, trial[n.node_id]) for n in vc.nodes]
            return consolidate_allocate(job.gpu_num, nodes) is not None

        chosen = None
        for i in range(1, len(cands) + 1):
            if fits(cands[:i]):
                chosen = cands[:i]
                break
        if chosen is None:
            return None
        # drop victims that turn out unnecessary, keeping the longest-remaining ones
        for r in sorted(chosen, key=lambda r: (r.remaining_at(now), r.job.job_id)):
            rest = [c for c in chosen if c is not r]
            if rest and fits(rest):
                chosen = rest
        return chosen

    on_end = getattr(policy, "on_job_end", None)
    on_tick = getattr(policy, "on_tick", None)

    ticked = False
    while heap:
        now = heap[0].time
        touched: set[str] = set()
        while heap and heap[0].time == now:
            ev = heapq.heappop(heap)
            if ev.kind is EventKind.JOB_END:
                job = job_of[ev.payload]
                vc = vc_for(job)
                r = vc.running.get(job.job_id)
                if r is None or r.version != ev.version:
                    continue  # stale end of a preempted segment
                vc.release(r.placement)
                del vc.running[job.job_id]
                outcomes[job.job_id].end = now
                touched.add(vc.name)
                if on_end is not None:
                    on_end(job, now)
            elif ev.kind is EventKind.JOB_SUBMIT:
                job = job_of[ev.payload]
                vc = vc_for(job)
                key = job.duration if preemptive else policy.priority(job, now)
                vc.push(key, job)
                touched.add(vc.name)
            else:
                if on_tick is not None:
                    on_tick(now)
                touched.update(vcs)
                ticked = True
        for name in sorted(touched):
            schedule(vcs[name], now)
        if ticked:
            ticked = False
            if heap or any(v.pending or v.running for v in vcs.values()):
                heapq.heappush(heap, SimEvent(now + opts.tick_period, EventKind.PERIODIC_TICK))
        if opts.check_invariants:
            for name in touched:
                for nd in vcs[name].nodes:
                    assert 0 <= nd.free_gpus <= nd.total_gpus

    stuck = [o.job_id for o in outcomes.values() if o.end is None]
    if stuck:
        raise RuntimeError(f"{len(stuck)} jobs never finished, e.g. {stuck[:3]}")
    result = SimResult(
        policy=getattr(policy, "name", type(policy).__name__),
        outcomes=sorted(outcomes.values(), key=lambda o: (o.submit, o.job_id)),
        unschedulable=unschedulable,
        vc_gpus={name: vc.capacity for name, vc in vcs.items()},
        vc_nodes={name: [n.node_id for n in vc.nodes] for name, vc in vcs.items()},
        gpus_per_node=cluster.gpus_per_node,
        preemptions=stats["preemptions"],
    )
    if opts.check_invariants:
        check_result(result)
    return result


def check_result(result: SimResult):
    """Assert the conservation and capacity invariants of a finished run."""
    events = []
    for o in result.outcomes:
        assert o.start >= o.submit, o.job_id
        served = sum(s.end - s.start for s in o.segments)
        assert served == o.duration, (o.job_id, served, o.duration)
        assert o.end == (o.segments[-1].end if o.segments else o.start)
        for s in o.segments:
            assert sum(s.placement.values()) == o.gpu_num, o.job_id  # gang: all or nothing
            for nid, g in s.placement.items():
                if s.end > s.start:
                    events.append((s.start, 1, nid, g))
                    events.append((s.end, 0, nid, -g))
    used: dict[int, int] = {}
    for _, _, nid, g in sorted(events):
        used[nid] = used.get(nid, 0) + g
        assert 0 <= used[nid] <= result.gpus_per_node, f"node {nid} over capacity"


def run_many(jobs: Sequence[JobRecord], cluster: ClusterSpec,
             policies: dict[str, Callable[[], Policy]], options: SimOptions | None = None,
             workers: int = 1) -> dict[str, SimResult]:
    """Run several independent simulations, optionally in worker processes.

    ``policies`` maps a name to a zero-argument factory so each run gets
    fresh policy state.
    """
    if workers <= 1:
        return {name: run_simulation(jobs, cluster, make(), options) for name, make in policies.items()}
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = {name: ex.submit(_run_one, jobs, cluster, make, options) for name, make in policies.items()}
        return {name: f.result() for name, f in futs.items()}


def _run_one(jobs, cluster, make, options):
    return run_simulation(jobs, cluster, make(), options)
