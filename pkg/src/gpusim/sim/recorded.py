"""Place jobs at their recorded start/end times instead of scheduling them.

Real traces carry start and end times but not node assignments. Node-level
occupancy (e.g. the running-node series used for energy studies) needs a
placement, so each job is placed at its recorded start with the same
consolidated placement the simulator uses. When the recorded history does
not fit the modelled VC layout, the job is spread over the emptiest nodes
of its VC, then of the whole cluster; jobs that fit nowhere are skipped.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from ..trace import ClusterSpec, JobRecord
from .engine import ALL_VCS, JobOutcome, Segment, SimResult, build_vcs
from .placement import SimNode, consolidate_allocate

logger = logging.getLogger(__name__)


@dataclass
class RecordedPlacement:
    result: SimResult
    spread: int  # jobs placed without consolidation
    skipped: list[str]


def _spread(gpus: int, nodes: list[SimNode]) -> dict[int, int] | None:
    if sum(n.free_gpus for n in nodes) < gpus:
        return None
    out = {}
    for n in sorted(nodes, key=lambda n: (-n.free_gpus, n.node_id)):
        if gpus == 0:
            break
        take = min(n.free_gpus, gpus)
        if take:
            out[n.node_id] = take
            gpus -= take
    return out


def place_recorded(jobs: Sequence[JobRecord], cluster: ClusterSpec) -> RecordedPlacement:
    """Outcomes whose segments are the recorded run intervals, placed on concrete nodes."""
    ran = [j for j in jobs if j.gpu_num > 0 and j.start_time is not None and j.end_time is not None
           and j.end_time > j.start_time]
    at = min((j.submit_time for j in ran), default=0)
    vcs = build_vcs(cluster, at)
    shared = not cluster.vcs
    all_nodes = [n for vc in vcs.values() for n in vc.nodes]
    by_id = {n.node_id: n for n in all_nodes}
    events = sorted([(j.end_time, 0, j.job_id) for j in ran] + [(j.start_time, 1, j.job_id) for j in ran])
    job_of = {j.job_id: j for j in ran}
    held: dict[str, dict[int, int]] = {}
    outcomes, skipped, spread = [], [], 0
    for t, kind, jid in events:
        j = job_of[jid]
        if kind == 0:
            for nid, g in held.pop(jid, {}).items():
                by_id[nid].release(g)
            continue
        vc = vcs.get(ALL_VCS if shared else j.vc)
        own = vc.nodes if vc is not None else []
        placement = consolidate_allocate(j.gpu_num, own) if own else None
        if placement is None:
            placement = _spread(j.gpu_num, own) or _spread(j.gpu_num, all_nodes)
            if placement is None:
                skipped.append(jid)
                continue
            spread += 1
        for nid, g in placement.items():
            by_id[nid].allocate(g)
        held[jid] = placement
        o = JobOutcome(jid, j.vc, j.gpu_num, j.end_time - j.start_time, j.submit_time,
                       start=j.start_time, end=j.end_time,
                       segments=[Segment(j.start_time, j.end_time, placement)])
        outcomes.append(o)
    if spread or skipped:
        logger.warning("recorded placement: %d jobs spread across nodes, %d skipped", spread, len(skipped))
    outcomes.sort(key=lambda o: (o.submit, o.job_id))
    result = SimResult(
        policy="recorded", outcomes=outcomes, unschedulable=skipped,
        vc_gpus={name: vc.capacity for name, vc in vcs.items()},
        vc_nodes={name: [n.node_id for n in vc.nodes] for name, vc in vcs.items()},
        gpus_per_node=cluster.gpus_per_node)
    return RecordedPlacement(result, spread, skipped)
