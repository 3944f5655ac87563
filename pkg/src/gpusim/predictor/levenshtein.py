"""Edit distance and greedy leader clustering of job names."""
from __future__ import annotations

from collections import defaultdict


def levenshtein(a: str, b: str) -> int:
    """Minimum number of single-character insertions, deletions and substitutions turning ``a`` into ``b``."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def levenshtein_within(a: str, b: str, limit: int) -> int | None:
    """Distance between ``a`` and ``b`` if it is at most ``limit``, else None.

    Stops as soon as every cell of a DP row exceeds ``limit``.
    """
    if abs(len(a) - len(b)) > limit:
        return None
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a) if len(a) <= limit else None
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        if min(cur) > limit:
            return None
        prev = cur
    return prev[-1] if prev[-1] <= limit else None


def normalized_distance(a: str, b: str) -> float:
    m = max(len(a), len(b))
    return 0.0 if m == 0 else levenshtein(a, b) / m


class NameClusterIndex:
    """Greedy leader clustering of names under normalized edit distance.

    Names are scanned in first-seen order. A new name joins the first
    cluster (by creation order) whose leader is within ``tau`` of it,
    otherwise it founds a new cluster. Identical names always share a
    cluster. Cluster ids start at 0.
    """

    def __init__(self, tau: float = 0.3):
        if not 0.0 <= tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        self.tau = tau
        self.leaders: list[str] = []
        self.assign: dict[str, int] = {}
        self._by_len: dict[int, list[int]] = defaultdict(list)

    def __len__(self) -> int:
        return len(self.assign)

    @property
    def n_clusters(self) -> int:
        return len(self.leaders)

    def lookup(self, name: str) -> int | None:
        """Cluster id ``name`` would join, without inserting it; None if it would found a new one."""
        cid = self.assign.get(name)
        if cid is not None:
            return cid
        best = None
        n = len(name)
        # a leader of length m can only match if |n - m| <= tau * max(n, m)
        for m, ids in self._by_len.items():
            longest = max(n, m)
            if abs(n - m) > self.tau * longest:
                continue
            limit = int(self.tau * longest + 1e-9)
            for cid in ids:
                if best is not None and cid > best:
                    break
                d = levenshtein_within(name, self.leaders[cid], limit)
                if d is not None and (longest == 0 or d / longest <= self.tau):
                    best = cid
                    break
        return best

    def add(self, name: str) -> int:
        cid = self.lookup(name)
        if cid is None:
            cid = len(self.leaders)
            self.leaders.append(name)
            self._by_len[len(name)].append(cid)
        self.assign[name] = cid
        return cid

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = defaultdict(list)
        for name, cid in self.assign.items():
            out[cid].append(name)
        return dict(out)

    def to_dict(self) -> dict:
        return {"tau": self.tau, "leaders": self.leaders, "assign": self.assign}

    @classmethod
    def from_dict(cls, d: dict) -> "NameClusterIndex":
        idx = cls(d["tau"])
        for cid, leader in enumerate(d["leaders"]):
            idx.leaders.append(leader)
            idx._by_len[len(leader)].append(cid)
        idx.assign = {k: int(v) for k, v in d["assign"].items()}
        return idx


def cluster_names(names, tau: float = 0.3) -> NameClusterIndex:
    idx = NameClusterIndex(tau)
    for name in names:
        if name not in idx.assign:
            idx.add(name)
    return idx
