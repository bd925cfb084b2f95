"""Gradient-boosted regression trees built from scratch.

Pointwise-trained GBDT standing in for the listwise family. Trees are
stored as flat arrays so prediction is a vectorized level walk. Split
search is exact: every midpoint between consecutive distinct sorted values
of every feature is considered; ties in SSE are broken by lowest feature
index, then lowest threshold, making training fully deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .letor import Dataset
from .rankers import RankerModel


@dataclass
class RegressionTree:
    feature: np.ndarray  # int, -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        idx = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            active = self.feature[idx] >= 0
            if not active.any():
                break
            rows = np.nonzero(active)[0]
            nodes = idx[rows]
            go_left = X[rows, self.feature[nodes]] <= self.threshold[nodes]
            idx[rows] = np.where(go_left, self.left[nodes], self.right[nodes])
        return self.value[idx]


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[int, float] | None:
    n = X.shape[0]
    total_sum = y.sum()
    total_sq = (y * y).sum()
    left_sizes = np.arange(1, n)
    best_sse = np.inf
    best: tuple[int, float] | None = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        ys = y[order]
        valid = (xs[1:] > xs[:-1]) & (left_sizes >= min_leaf) & ((n - left_sizes) >= min_leaf)
        if not valid.any():
            continue
        cs = np.cumsum(ys)[:-1]
        cq = np.cumsum(ys * ys)[:-1]
        sse = (cq - cs * cs / left_sizes) + ((total_sq - cq) - (total_sum - cs) ** 2 / (n - left_sizes))
        sse = np.where(valid, sse, np.inf)
        pos = int(np.argmin(sse))
        if sse[pos] < best_sse:
            best_sse = float(sse[pos])
            best = (j, float((xs[pos] + xs[pos + 1]) / 2.0))
    return best


def fit_regression_tree(X: np.ndarray, y: np.ndarray, max_depth: int, min_leaf: int) -> RegressionTree:
    features: list[int] = []
    thresholds: list[float] = []
    lefts: list[int] = []
    rights: list[int] = []
    values: list[float] = []

    def grow(rows: np.ndarray, depth: int) -> int:
        node = len(features)
        features.append(-1)
        thresholds.append(0.0)
        lefts.append(-1)
        rights.append(-1)
        values.append(float(y[rows].mean()))
        y_node = y[rows]
        if depth >= max_depth or len(rows) < 2 * min_leaf or np.ptp(y_node) == 0.0:
            return node
        split = _best_split(X[rows], y_node, min_leaf)
        if split is None:
            return node
        j, thr = split
        go_left = X[rows, j] <= thr
        features[node] = j
        thresholds[node] = thr
        lefts[node] = grow(rows[go_left], depth + 1)
        rights[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return RegressionTree(
        feature=np.array(features, dtype=np.int64),
        threshold=np.array(thresholds, dtype=np.float64),
        left=np.array(lefts, dtype=np.int64),
        right=np.array(rights, dtype=np.int64),
        value=np.array(values, dtype=np.float64),
    )


class TreeEnsembleRanker(RankerModel):
    kind = "tree-ensemble"

    def __init__(self, base_value: float, trees: list[RegressionTree], learning_rate: float):
        self.base_value = float(base_value)
        self.trees = trees
        self.learning_rate = float(learning_rate)
        self.feature_count = None
        self.train_mse: list[float] = []

    def score_query(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        scores = np.full(X.shape[0], self.base_value)
        for tree in self.trees:
            scores = scores + self.learning_rate * tree.predict(X)
        return scores


def train_tree_ensemble(
    train: Dataset,
    n_trees: int = 50,
    max_depth: int = 3,
    learning_rate: float = 0.1,
    min_leaf: int = 1,
    seed: int = 0,
) -> TreeEnsembleRanker:
    """Gradient boosting on squared error against relevance labels.

    Each round fits an exact-split regression tree to the current residuals
    and adds it with shrinkage `learning_rate`. Training has no stochastic
    element; `seed` is accepted for interface uniformity with the other
    trainers.
    """
    if n_trees < 1 or max_depth < 1 or min_leaf < 1:
        raise ValueError("n_trees, max_depth and min_leaf must all be >= 1")
    del seed
    X = train.all_features()
    y = np.concatenate([q.labels for q in train.queries]).astype(np.float64)
    base = float(y.mean())
    pred = np.full(len(y), base)
    trees: list[RegressionTree] = []
    mse: list[float] = []
    for _ in range(n_trees):
        tree = fit_regression_tree(X, y - pred, max_depth, min_leaf)
        pred = pred + learning_rate * tree.predict(X)
        trees.append(tree)
        mse.append(float(np.mean((y - pred) ** 2)))
    model = TreeEnsembleRanker(base_value=base, trees=trees, learning_rate=learning_rate)
    model.feature_count = X.shape[1]
    model.train_mse = mse
    return model
