"""Gradient-boosted regression trees (squared error, exact greedy splits)."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field

import numpy as np

FORMAT = "gpusim.gbdt"
VERSION = 1


@dataclass
class GBDTConfig:
    rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 6
    min_samples_leaf: int = 20

    def check(self):
        if self.rounds <= 0:
            raise ValueError("rounds must be positive")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_depth < 0 or self.min_samples_leaf < 1:
            raise ValueError("max_depth must be >= 0 and min_samples_leaf >= 1")


@dataclass
class RegressionTree:
    """Flat binary tree. Node 0 is the root; ``feature == -1`` marks a leaf.

    Rows with ``x[feature] < threshold`` go left.
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        idx = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[idx]
            inner = f >= 0
            if not inner.any():
                return idx
            go_left = X[rows, np.where(inner, f, 0)] < self.threshold[idx]
            idx = np.where(inner, np.where(go_left, self.left[idx], self.right[idx]), idx)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(np.asarray(X, dtype=np.float64))]

    def to_list(self) -> list:
        return [self.feature.tolist(), self.threshold.tolist(), self.left.tolist(),
                self.right.tolist(), self.value.tolist()]

    @classmethod
    def from_list(cls, data) -> "RegressionTree":
        f, t, l, r, v = data
        return cls(np.array(f, dtype=np.int64), np.array(t, dtype=np.float64),
                   np.array(l, dtype=np.int64), np.array(r, dtype=np.int64),
                   np.array(v, dtype=np.float64))


class _Binned:
    """Per-feature ranks of the distinct training values, computed once per fit."""

    def __init__(self, X: np.ndarray):
        self.uniques = []
        self.codes = []
        for f in range(X.shape[1]):
            u, inv = np.unique(X[:, f], return_inverse=True)
            self.uniques.append(u)
            self.codes.append(inv.astype(np.int64))


def _best_split(binned: _Binned, idx: np.ndarray, r: np.ndarray, min_leaf: int):
    """Best (gain, feature, threshold, left_mask) over all features for the rows ``idx``.

    Candidate thresholds sit midway between consecutive distinct values.
    Ties keep the lowest feature index and the lowest threshold.
    """
    n = len(idx)
    ri = r[idx]
    total = ri.sum()
    base = total * total / n
    scale = max(1.0, float(ri @ ri))
    best = (0.0, -1, 0.0, None)
    for f, codes in enumerate(binned.codes):
        c = codes[idx]
        u = binned.uniques[f]
        if n < len(u):
            order = np.argsort(c, kind="stable")
            cs = c[order]
            csum = np.cumsum(ri[order])
            # last position of each distinct value
            ends = np.flatnonzero(np.diff(cs)) if n > 1 else np.array([], dtype=np.int64)
            n_left = ends + 1
            s_left = csum[ends]
            left_code = cs[ends]
            right_code = cs[ends + 1]
        else:
            cnt = np.bincount(c, minlength=len(u))
            sm = np.bincount(c, weights=ri, minlength=len(u))
            present = np.flatnonzero(cnt)
            if len(present) < 2:
                continue
            ccnt = np.cumsum(cnt[present])
            csm = np.cumsum(sm[present])
            n_left = ccnt[:-1]
            s_left = csm[:-1]
            left_code = present[:-1]
            right_code = present[1:]
        if len(n_left) == 0:
            continue
        n_right = n - n_left
        ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not ok.any():
            continue
        s_right = total - s_left
        gain = s_left ** 2 / n_left + s_right ** 2 / n_right - base
        gain = np.where(ok, gain, -np.inf)
        k = int(np.argmax(gain))
        g = float(gain[k])
        if g > best[0] and g > 1e-12 * scale:
            thr = (u[left_code[k]] + u[right_code[k]]) / 2.0
            best = (g, f, float(thr), c <= left_code[k])
    return best


def fit_tree(X: np.ndarray, r: np.ndarray, max_depth: int, min_samples_leaf: int,
             binned: _Binned | None = None) -> RegressionTree:
    """Least-squares regression tree on targets ``r`` with leaf values = mean target."""
    binned = binned or _Binned(X)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(r[idx].mean()))
        return len(feature) - 1

    root_idx = np.arange(len(r))
    stack = [(new_node(root_idx), root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or len(idx) < 2 * min_samples_leaf:
            continue
        gain, f, thr, mask = _best_split(binned, idx, r, min_samples_leaf)
        if f < 0:
            continue
        li, ri_ = idx[mask], idx[~mask]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(li)
        right[node] = new_node(ri_)
        stack.append((right[node], ri_, depth + 1))
        stack.append((left[node], li, depth + 1))
    return RegressionTree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                          np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                          np.array(value, dtype=np.float64))


@dataclass
class GBDTModel:
    base: float
    learning_rate: float
    n_features: int
    trees: list[RegressionTree] = field(default_factory=list)
    config: GBDTConfig = field(default_factory=GBDTConfig)
    _packed: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def rounds(self) -> int:
        return len(self.trees)

    def _pack(self):
        if self._packed is not None and self._packed[0] == len(self.trees):
            return self._packed
        offs, feats, thrs, ls, rs, vals = [], [], [], [], [], []
        off = 0
        depth = 0
        for t in self.trees:
            offs.append(off)
            feats.append(t.feature)
            thrs.append(t.threshold)
            ls.append(np.where(t.left >= 0, t.left + off, -1))
            rs.append(np.where(t.right >= 0, t.right + off, -1))
            vals.append(t.value)
            off += t.n_nodes
            depth = max(depth, t.depth)
        cat = (lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dtype=dt))
        self._packed = (len(self.trees), np.array(offs, dtype=np.int64), cat(feats, np.int64),
                        cat(thrs, np.float64), cat(ls, np.int64), cat(rs, np.int64),
                        cat(vals, np.float64), depth)
        return self._packed

    def predict_raw(self, X) -> np.ndarray:
        """Unclamped ensemble output ``base + learning_rate * sum(tree outputs)``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.full(len(X), self.base)
        if not self.trees:
            return out
        _, roots, feat, thr, L, R, val, depth = self._pack()
        chunk = max(1, 2_000_000 // len(roots))
        for s in range(0, len(X), chunk):
            xb = X[s:s + chunk]
            rows = np.arange(len(xb))[:, None]
            idx = np.broadcast_to(roots, (len(xb), len(roots))).copy()
            for _ in range(depth):
                f = feat[idx]
                inner = f >= 0
                go_left = xb[rows, np.where(inner, f, 0)] < thr[idx]
                idx = np.where(inner, np.where(go_left, L[idx], R[idx]), idx)
            out[s:s + chunk] += self.learning_rate * val[idx].sum(axis=1)
        return out

    def to_dict(self) -> dict:
        return {"format": FORMAT, "version": VERSION, "base": self.base,
                "learning_rate": self.learning_rate, "n_features": self.n_features,
                "config": asdict(self.config), "trees": [t.to_list() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "GBDTModel":
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise ValueError(f"unsupported model format {d.get('format')!r} v{d.get('version')}")
        return cls(base=float(d["base"]), learning_rate=float(d["learning_rate"]),
                   n_features=int(d["n_features"]),
                   trees=[RegressionTree.from_list(t) for t in d["trees"]],
                   config=GBDTConfig(**d["config"]))


def _boost(model: GBDTModel, X: np.ndarray, y: np.ndarray, rounds: int, cfg: GBDTConfig,
           callback=None) -> GBDTModel:
    binned = _Binned(X)
    pred = model.predict_raw(X) if model.trees else np.full(len(y), model.base)
    for k in range(rounds):
        resid = y - pred
        tree = fit_tree(X, resid, cfg.max_depth, cfg.min_samples_leaf, binned)
        model.trees.append(tree)
        pred = pred + model.learning_rate * tree.predict(X)
        if callback is not None:
            callback(k, model, pred)
    model._packed = None
    return model


def train_gbdt(X, y, config: GBDTConfig | None = None, callback=None) -> GBDTModel:
    """Fit a squared-error boosted ensemble.

    The base prediction is the target mean and each round fits a
    depth-limited tree to the current residuals. ``callback(k, model, pred)``
    is called after round ``k`` with the training predictions.
    """
    cfg = config or GBDTConfig()
    cfg.check()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
        raise ValueError("need a non-empty 2-D feature matrix matching y")
    model = GBDTModel(base=float(y.mean()), learning_rate=cfg.learning_rate,
                      n_features=X.shape[1], config=cfg)
    return _boost(model, X, y, cfg.rounds, cfg, callback)


def predict_gbdt(model: GBDTModel, X) -> np.ndarray:
    """Predicted durations in seconds, never below one second."""
    return np.maximum(model.predict_raw(X), 1.0)


def update_model(model: GBDTModel, X, y, rounds: int = 20) -> GBDTModel:
    """Return a copy of ``model`` with ``rounds`` extra trees fit to its residuals on ``(X, y)``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    new = copy.deepcopy(model)
    new._packed = None
    if len(y) == 0 or rounds <= 0:
        return new
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features")
    return _boost(new, X, y, rounds, model.config)
