"""Consolidated gang placement of GPU jobs onto VC nodes."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass
class SimNode:
    node_id: int
    vc: str
    total_gpus: int
    free_gpus: int

    def allocate(self, n: int):
        if not 0 < n <= self.free_gpus:
            raise AssertionError(f"node {self.node_id}: allocating {n} with {self.free_gpus} free")
        self.free_gpus -= n

    def release(self, n: int):
        if not 0 < n <= self.total_gpus - self.free_gpus:
            raise AssertionError(f"node {self.node_id}: releasing {n}, only {self.total_gpus - self.free_gpus} in use")
        self.free_gpus += n


def consolidate_allocate(gpu_num: int, nodes: list[SimNode]) -> dict[int, int] | None:
    """Pick nodes for a ``gpu_num``-GPU job, packing it onto as few nodes as possible.

    Jobs that fit on one node go to the best-fit node (fewest free GPUs that
    still suffice). Larger jobs need ``gpu_num // G`` completely free nodes
    plus, for a remainder, one best-fit node among the rest. Ties go to the
    lowest node id. Returns ``{node_id: gpus}`` or None when the job cannot
    be placed now. Does not mutate ``nodes``.
    """
    if gpu_num < 1:
        raise ValueError("consolidate_allocate needs gpu_num >= 1")
    if not nodes:
        return None
    per_node = nodes[0].total_gpus

    def best_fit(need, exclude=()):
        best = None
        for nd in nodes:
            if nd.free_gpus >= need and nd.node_id not in exclude:
                if best is None or (nd.free_gpus, nd.node_id) < (best.free_gpus, best.node_id):
                    best = nd
        return best

    if gpu_num <= per_node:
        nd = best_fit(gpu_num)
        return None if nd is None else {nd.node_id: gpu_num}

    full, rem = divmod(gpu_num, per_node)
    idle = sorted(nd.node_id for nd in nodes if nd.free_gpus == per_node)
    if len(idle) < full:
        return None
    chosen = idle[:full]
    placement = {nid: per_node for nid in chosen}
    if rem:
        nd = best_fit(rem, exclude=set(chosen))
        if nd is None:
            return None
        placement[nd.node_id] = rem
    return placement
