from __future__ import annotations

import numpy as np

from ..errors import TrainingError
from .base import NEG, POS, Classifier, check_training_set

RIDGE = 1e-6


class LinearDiscriminant(Classifier):
    """Gaussian class densities with a shared covariance; Bayes posterior decides."""

    kind = "LDA"

    def __init__(self, n_features, means, covariance, log_priors):
        super().__init__(n_features)
        # rows ordered (NEG, POS)
        self.means = np.asarray(means, dtype=float).reshape(2, n_features)
        self.covariance = np.asarray(covariance, dtype=float).reshape(n_features, n_features)
        self.log_priors = np.asarray(log_priors, dtype=float)
        self._precision = np.linalg.inv(self.covariance)

    def discriminants(self, X) -> np.ndarray:
        """Per-class log joint density up to a shared constant, columns (NEG, POS)."""
        X = self._check(X)
        P = self._precision
        lin = X @ P @ self.means.T
        quad = 0.5 * np.einsum("ij,jk,ik->i", self.means, P, self.means)
        return lin - quad + self.log_priors

    def posterior(self, X) -> np.ndarray:
        d = self.discriminants(X)
        d = d - d.max(axis=1, keepdims=True)
        e = np.exp(d)
        return e / e.sum(axis=1, keepdims=True)

    def score(self, X) -> np.ndarray:
        return self.posterior(X)[:, 1]

    def get_params(self):
        return {
            "means": self.means.tolist(),
            "covariance": self.covariance.tolist(),
            "log_priors": self.log_priors.tolist(),
        }

    @classmethod
    def from_params(cls, n_features, params):
        return cls(n_features, **params)


def train_lda(X, y, feature_names=None) -> LinearDiscriminant:
    X, y = check_training_set(X, y)
    n, m = X.shape
    classes = (NEG, POS)
    for c in classes:
        if np.sum(y == c) < 2:
            raise TrainingError(f"LDA needs at least 2 rows of class {c:+d}")
    means = np.stack([X[y == c].mean(axis=0) for c in classes])
    resid = X - means[(y == POS).astype(int)]
    cov = resid.T @ resid / (n - 2)
    eps = RIDGE * np.trace(cov) / m
    if not eps > 0:
        # the ridge scales with the trace, so it cannot rescue an all-zero covariance
        names = feature_names or [f"feature {i}" for i in range(m)]
        dead = [names[i] for i in np.nonzero(np.diag(cov) <= 0)[0]]
        raise TrainingError(f"pooled covariance is singular: zero within-class variance in {', '.join(dead)}")
    cov = cov + eps * np.eye(m)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise TrainingError("pooled covariance is not positive definite after regularisation") from None
    log_priors = np.log([np.mean(y == c) for c in classes])
    return LinearDiscriminant(m, means, cov, log_priors)
