from __future__ import annotations

import numpy as np

from ..errors import TrainingError
from .base import POS, Classifier, check_training_set

_CHUNK = 256


class KNearestNeighbors(Classifier):
    """Majority vote of the k nearest training rows in z-scored feature space.

    Equal distances rank by training-row order; a split vote is low risk.
    """

    kind = "KNN"

    def __init__(self, n_features, k, center, scale, train_x, train_y):
        super().__init__(n_features)
        self.k = int(k)
        self.center = np.asarray(center, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.train_x = np.asarray(train_x, dtype=float).reshape(-1, n_features)
        self.train_y = np.asarray(train_y, dtype=int)

    def standardize(self, X) -> np.ndarray:
        return (X - self.center) / self.scale

    def neighbors(self, X) -> np.ndarray:
        """Indices of the k nearest training rows, nearest first."""
        Q = self.standardize(self._check(X))
        out = np.empty((Q.shape[0], self.k), dtype=int)
        k = self.k
        for s in range(0, Q.shape[0], _CHUNK):
            d2 = ((Q[s:s + _CHUNK, None, :] - self.train_x[None, :, :]) ** 2).sum(axis=2)
            if k == d2.shape[1]:
                out[s:s + _CHUNK] = np.argsort(d2, axis=1, kind="stable")
                continue
            near = np.sort(np.argpartition(d2, k - 1, axis=1)[:, :k], axis=1)
            # rank the k candidates by (distance, row index)
            nd = np.take_along_axis(d2, near, axis=1)
            near = np.take_along_axis(near, np.argsort(nd, axis=1, kind="stable"), axis=1)
            kth = np.take_along_axis(d2, near[:, -1:], axis=1)
            # a tie straddling the k-th place needs the full stable order
            crowded = np.nonzero((d2 <= kth).sum(axis=1) > k)[0]
            if crowded.size:
                near[crowded] = np.argsort(d2[crowded], axis=1, kind="stable")[:, :k]
            out[s:s + _CHUNK] = near
        return out

    def score(self, X) -> np.ndarray:
        nb = self.neighbors(X)
        return (self.train_y[nb] == POS).mean(axis=1) if nb.size else np.empty(0)

    def get_params(self):
        return {
            "k": self.k,
            "center": self.center.tolist(),
            "scale": self.scale.tolist(),
            "train_x": self.train_x.tolist(),
            "train_y": self.train_y.tolist(),
        }

    @classmethod
    def from_params(cls, n_features, params):
        return cls(n_features, **params)


def train_knn(X, y, k: int = 5) -> KNearestNeighbors:
    X, y = check_training_set(X, y)
    if k < 1:
        raise TrainingError("k must be >= 1")
    if k > X.shape[0]:
        raise TrainingError(f"k={k} exceeds the {X.shape[0]} training rows")
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return KNearestNeighbors(X.shape[1], k, center, scale, (X - center) / scale, y)
