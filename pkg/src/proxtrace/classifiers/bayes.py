from __future__ import annotations

import numpy as np

from ..errors import TrainingError
from .base import NEG, POS, Classifier, check_training_set

VAR_FLOOR = 1e-9
LOG_2PI = np.log(2.0 * np.pi)


class GaussianNB(Classifier):
    """Per-class independent univariate Gaussians; MAP decision in the log domain."""

    kind = "NB"

    def __init__(self, n_features, means, variances, log_priors):
        super().__init__(n_features)
        self.means = np.asarray(means, dtype=float).reshape(2, n_features)
        self.variances = np.asarray(variances, dtype=float).reshape(2, n_features)
        self.log_priors = np.asarray(log_priors, dtype=float)

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = self._check(X)
        out = np.empty((X.shape[0], 2))
        for c in range(2):
            z = (X - self.means[c]) ** 2 / self.variances[c]
            out[:, c] = self.log_priors[c] - 0.5 * np.sum(LOG_2PI + np.log(self.variances[c]) + z, axis=1)
        return out

    def score(self, X) -> np.ndarray:
        j = self.joint_log_likelihood(X)
        j = j - j.max(axis=1, keepdims=True)
        e = np.exp(j)
        return e[:, 1] / e.sum(axis=1)

    def predict(self, X) -> np.ndarray:
        j = self.joint_log_likelihood(X)
        return np.where(j[:, 1] > j[:, 0], POS, NEG)

    def get_params(self):
        return {
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "log_priors": self.log_priors.tolist(),
        }

    @classmethod
    def from_params(cls, n_features, params):
        return cls(n_features, **params)


def train_nb(X, y) -> GaussianNB:
    X, y = check_training_set(X, y)
    classes = (NEG, POS)
    for c in classes:
        if not np.any(y == c):
            raise TrainingError(f"no training rows of class {c:+d}")
    floor = VAR_FLOOR * X.var(axis=0)
    # a globally constant feature still needs a positive variance
    floor = np.where(floor > 0, floor, VAR_FLOOR)
    means = np.stack([X[y == c].mean(axis=0) for c in classes])
    variances = np.stack([np.maximum(X[y == c].var(axis=0), floor) for c in classes])
    log_priors = np.log([np.mean(y == c) for c in classes])
    return GaussianNB(X.shape[1], means, variances, log_priors)
