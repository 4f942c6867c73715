"""Random forest of CART regression trees trained on log bits-per-pixel."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import FEATURE_SETS, as_features, require_columns
from .errors import InsufficientData, MissingFeatureColumn

N_TREES = 50
MIN_ROWS = 10
MIN_NODE_SIZE = 2


def default_mtry(n_features: int) -> int:
    return max(1, n_features // 3)


@dataclass
class RegressionTree:
    """Flat array encoding of a binary tree. ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while active.any():
            idx = rows[active]
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.value[node]

    def to_dict(self, names: Sequence[str], i: int = 0) -> dict:
        if self.feature[i] < 0:
            return {"value": float(self.value[i])}
        return {
            "feature": names[self.feature[i]],
            "threshold": float(self.threshold[i]),
            "left": self.to_dict(names, int(self.left[i])),
            "right": self.to_dict(names, int(self.right[i])),
        }

    @classmethod
    def from_dict(cls, data: dict, names: Sequence[str]) -> "RegressionTree":
        index = {name: k for k, name in enumerate(names)}
        feature, threshold, left, right, value = [], [], [], [], []
        stack = [(data, None, False)]
        while stack:
            node, parent, is_right = stack.pop()
            i = len(feature)
            if parent is not None:
                (right if is_right else left)[parent] = i
            if "value" in node:
                feature.append(-1)
                threshold.append(0.0)
                value.append(float(node["value"]))
                left.append(-1)
                right.append(-1)
                continue
            feature.append(index[node["feature"]])
            threshold.append(float(node["threshold"]))
            value.append(0.0)
            left.append(-1)
            right.append(-1)
            stack.append((node["right"], i, True))
            stack.append((node["left"], i, False))
        return cls(
            np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(value, dtype=float),
        )


def _best_split_on(x: np.ndarray, y: np.ndarray):
    """Best threshold on one feature by total child SSE. Returns (sse, threshold) or None."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order] - y.mean()
    n = len(ys)
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    csum = np.cumsum(ys)[:-1]
    csq = np.cumsum(ys * ys)[:-1]
    total, total_sq = csum[-1] + ys[-1], csq[-1] + ys[-1] ** 2
    n_left = np.arange(1, n)
    n_right = n - n_left
    sse = (csq - csum * csum / n_left) + ((total_sq - csq) - (total - csum) ** 2 / n_right)
    sse = np.where(valid, sse, np.inf)
    k = int(np.argmin(sse))
    lo, hi = xs[k], xs[k + 1]
    threshold = lo + (hi - lo) / 2.0
    if not lo <= threshold < hi:
        threshold = lo
    return float(sse[k]), float(threshold)


def grow_tree(
    X: np.ndarray, y: np.ndarray, rng: np.random.Generator, mtry: int, min_node_size: int = MIN_NODE_SIZE
) -> RegressionTree:
    """Grow an unpruned CART tree. At each node ``mtry`` randomly drawn
    features are tried first; the remaining ones are only tried if none of
    those admits a split."""
    n_features = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []
    stack = [(np.arange(len(y)), None, False)]
    while stack:
        idx, parent, is_right = stack.pop()
        i = len(feature)
        if parent is not None:
            (right if is_right else left)[parent] = i
        ys = y[idx]
        feature.append(-1)
        threshold.append(0.0)
        value.append(float(ys.mean()))
        left.append(-1)
        right.append(-1)
        if len(idx) < min_node_size or np.all(ys == ys[0]):
            continue
        order = rng.permutation(n_features)
        best = None
        for rank, f in enumerate(order):
            if rank >= mtry and best is not None:
                break
            found = _best_split_on(X[idx, f], ys)
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], found[1], int(f))
        if best is None:
            continue
        _, thr, f = best
        feature[i] = f
        threshold[i] = thr
        go_left = X[idx, f] <= thr
        stack.append((idx[~go_left], i, True))
        stack.append((idx[go_left], i, False))
    return RegressionTree(
        np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
    )


class RandomForest:
    """Bagged regression trees over a plain feature matrix."""

    def __init__(self, n_trees=N_TREES, mtry=None, min_node_size=MIN_NODE_SIZE, seed=0, n_jobs=1):
        self.n_trees = n_trees
        self.mtry = mtry
        self.min_node_size = min_node_size
        self.seed = seed
        self.n_jobs = n_jobs
        self.trees: list[RegressionTree] = []

    def _fit_one(self, X, y, seed_seq, mtry):
        rng = np.random.default_rng(seed_seq)
        sample = rng.integers(0, len(y), size=len(y))
        return grow_tree(X[sample], y[sample], rng, mtry, self.min_node_size)

    def fit(self, X, y) -> "RandomForest":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(y) == 0:
            raise InsufficientData("cannot fit a forest on zero rows")
        mtry = self.mtry or default_mtry(X.shape[1])
        # one child seed per tree keeps serial and threaded fits identical
        seeds = np.random.SeedSequence(self.seed).spawn(self.n_trees)
        if self.n_jobs > 1:
            with ThreadPoolExecutor(self.n_jobs) as pool:
                self.trees = list(pool.map(lambda s: self._fit_one(X, y, s, mtry), seeds))
        else:
            self.trees = [self._fit_one(X, y, s, mtry) for s in seeds]
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)


@dataclass
class ForestModel:
    feature_set: str
    forest: RandomForest
    preset: int | None = None
    target_space: str = "ln_bpp"
    params: dict = field(default_factory=dict)

    kind = "forest"

    @property
    def feature_names(self) -> tuple[str, ...]:
        return FEATURE_SETS[self.feature_set]

    @property
    def seed(self) -> int:
        return self.forest.seed

    def _matrix(self, items) -> np.ndarray:
        names = self.feature_names
        rows = []
        for item in items:
            feats = as_features(item)
            values = []
            for name in names:
                value = getattr(feats, name)
                if value is None:
                    raise MissingFeatureColumn(f"{self.feature_set} model needs {name!r}")
                values.append(float(value))
            rows.append(values)
        return np.array(rows, dtype=float).reshape(len(rows), len(names))

    def predict_log(self, items) -> np.ndarray:
        return self.forest.predict(self._matrix(items))

    def predict_many(self, items) -> np.ndarray:
        return np.exp(self.predict_log(items))

    def predict(self, features) -> float:
        return float(self.predict_many([features])[0])

    def to_dict(self) -> dict:
        names = self.feature_names
        return {
            "kind": self.kind,
            "preset": self.preset,
            "feature_set": self.feature_set,
            "features": list(names),
            "target_space": self.target_space,
            "seed": self.forest.seed,
            "n_trees": len(self.forest.trees),
            "mtry": self.forest.mtry or default_mtry(len(names)),
            "min_node_size": self.forest.min_node_size,
            "trees": [tree.to_dict(names) for tree in self.forest.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ForestModel":
        names = data["features"]
        if tuple(names) != FEATURE_SETS[data["feature_set"]]:
            raise ValueError("feature list does not match the declared feature set")
        forest = RandomForest(
            n_trees=data["n_trees"], mtry=data["mtry"],
            min_node_size=data["min_node_size"], seed=data["seed"],
        )
        forest.trees = [RegressionTree.from_dict(t, names) for t in data["trees"]]
        return cls(data["feature_set"], forest, data.get("preset"), data["target_space"])


def fit_forest(
    rows,
    feature_set: str,
    seed: int,
    n_trees: int = N_TREES,
    mtry: int | None = None,
    min_node_size: int = MIN_NODE_SIZE,
    n_jobs: int = 1,
    preset: int | None = None,
) -> ForestModel:
    """Train on ln(target_bpp) using the columns named by ``feature_set``."""
    if len(rows) < MIN_ROWS:
        raise InsufficientData(f"{len(rows)} rows, a forest needs at least {MIN_ROWS}")
    names = require_columns(rows, feature_set)
    X = np.array([row.features.values(names) for row in rows], dtype=float)
    y = np.array([math.log(row.target_bpp) for row in rows], dtype=float)
    forest = RandomForest(n_trees, mtry, min_node_size, seed, n_jobs).fit(X, y)
    return ForestModel(feature_set, forest, preset)


def predict_forest(model: ForestModel, features) -> float:
    return model.predict(features)
