"""Binary classification tree grown top-down by exhaustive threshold search.

A split ``(feature, gamma)`` sends rows with ``x <= gamma`` to one child and
the rest to the other.  The chosen split minimises the size-weighted child
impurity.  Candidate thresholds are midpoints between consecutive distinct
values; ties go to the lowest feature index, then the smallest threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import POS, Classifier, check_training_set


def gini(pos: np.ndarray | float, n: np.ndarray | float):
    p = pos / n
    return 2.0 * p * (1.0 - p)


def entropy(pos: np.ndarray | float, n: np.ndarray | float):
    p = np.asarray(pos / n, dtype=float)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log2(p), 0.0) + np.where(q > 0, q * np.log2(q), 0.0))
    return h if h.ndim else float(h)


CRITERIA = {"gini": gini, "entropy": entropy}


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    impurity: float


_TIE_TOL = 1e-12


def candidate_splits(x: np.ndarray, pos: np.ndarray, min_leaf: int, impurity) -> tuple[np.ndarray, np.ndarray]:
    """Thresholds and weighted impurities of every admissible split on one feature."""
    n = x.size
    order = np.argsort(x, kind="stable")
    xs = x[order]
    cum = np.cumsum(pos[order])
    i = np.nonzero(xs[:-1] < xs[1:])[0]
    n_le = i + 1
    ok = (n_le >= min_leaf) & (n - n_le >= min_leaf)
    i, n_le = i[ok], n_le[ok]
    if i.size == 0:
        return np.empty(0), np.empty(0)
    pos_le = cum[i]
    pos_gt = cum[-1] - pos_le
    n_gt = n - n_le
    g = (n_le / n) * impurity(pos_le, n_le) + (n_gt / n) * impurity(pos_gt, n_gt)
    gamma = (xs[i] + xs[i + 1]) / 2.0
    # midpoint of adjacent floats can round up onto the upper value
    gamma = np.where(gamma < xs[i + 1], gamma, xs[i])
    return gamma, g


def best_split(X: np.ndarray, pos: np.ndarray, min_leaf: int, impurity) -> Split | None:
    best = None
    for f in range(X.shape[1]):
        gamma, g = candidate_splits(X[:, f], pos, min_leaf, impurity)
        if g.size == 0:
            continue
        # impurities equal up to rounding count as ties
        k = int(np.argmax(g <= g.min() + _TIE_TOL))
        if best is None or g[k] < best.impurity - _TIE_TOL:
            best = Split(f, float(gamma[k]), float(g[k]))
    return best


class DecisionTree(Classifier):
    kind = "DT"

    def __init__(self, n_features: int, feature, threshold, left, right, value, n_node):
        super().__init__(n_features)
        self.feature = np.asarray(feature, dtype=int)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=int)
        self.right = np.asarray(right, dtype=int)
        # fraction of high-risk training rows reaching each node
        self.value = np.asarray(value, dtype=float)
        self.n_node = np.asarray(n_node, dtype=int)

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def depth(self) -> int:
        def walk(i):
            return 0 if self.feature[i] < 0 else 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row."""
        X = self._check(X)
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r = rows[inner]
            go_le = X[r, f[inner]] <= self.threshold[node[inner]]
            node[r] = np.where(go_le, self.left[node[inner]], self.right[node[inner]])

    def score(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def get_params(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [float(v) for v in self.value],
            "n_node": self.n_node.tolist(),
        }

    @classmethod
    def from_params(cls, n_features, params):
        return cls(n_features, **params)


def train_dt(X, y, max_depth: int = 12, min_leaf: int = 5, criterion: str = "gini") -> DecisionTree:
    """Grow a tree; a node becomes a leaf when pure, at ``max_depth``, or when no
    split with at least ``min_leaf`` rows per side lowers its impurity."""
    X, y = check_training_set(X, y)
    if max_depth < 0 or min_leaf < 1:
        raise ValueError("need max_depth >= 0 and min_leaf >= 1")
    impurity = CRITERIA[criterion]
    pos = (y == POS).astype(float)

    feature, threshold, left, right, value, n_node = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(math.nan)
        left.append(-1)
        right.append(-1)
        value.append(float(pos[idx].mean()))
        n_node.append(int(idx.size))
        return len(feature) - 1

    def grow(idx, depth):
        node = new_node(idx)
        n_pos = pos[idx].sum()
        if n_pos == 0 or n_pos == idx.size or depth >= max_depth or idx.size < 2 * min_leaf:
            return node
        split = best_split(X[idx], pos[idx], min_leaf, impurity)
        if split is None or not split.impurity < impurity(n_pos, idx.size):
            return node
        le = X[idx, split.feature] <= split.threshold
        feature[node] = split.feature
        threshold[node] = split.threshold
        left[node] = grow(idx[le], depth + 1)
        right[node] = grow(idx[~le], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return DecisionTree(X.shape[1], feature, threshold, left, right, value, n_node)

