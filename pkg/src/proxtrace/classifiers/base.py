from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import PredictionError, TrainingError

POS, NEG = 1, -1
FORMAT_TAG = "proxtrace-model"
FORMAT_VERSION = 1


def check_training_set(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2:
        raise TrainingError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if X.shape[0] == 0:
        raise TrainingError("empty training set")
    if y.shape != (X.shape[0],):
        raise TrainingError("labels must be a vector with one entry per row")
    bad = set(np.unique(y).tolist()) - {POS, NEG}
    if bad:
        raise TrainingError(f"labels must be +1/-1, found {sorted(bad)}")
    if not np.all(np.isfinite(X)):
        raise TrainingError("feature matrix contains non-finite values")
    return X, y


class Classifier:
    """Shared predict/score/persistence surface of the four risk classifiers."""

    kind: str = ""

    def __init__(self, n_features: int):
        self.n_features = n_features

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.size == 0:
            return X.reshape(0, self.n_features)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise PredictionError(f"{self.kind} model expects {self.n_features} features, got shape {X.shape}")
        return X

    def score(self, X) -> np.ndarray:
        """Continuous high-risk score in [0, 1] per row."""
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        s = self.score(X)
        # exact ties go to low risk
        return np.where(s > 0.5, POS, NEG)

    def get_params(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_params(cls, n_features: int, params: dict) -> "Classifier":
        raise NotImplementedError

    def to_json(self) -> str:
        doc = {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "n_features": self.n_features,
            "params": self.get_params(),
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def _registry() -> dict[str, type[Classifier]]:
    from .bayes import GaussianNB
    from .knn import KNearestNeighbors
    from .lda import LinearDiscriminant
    from .tree import DecisionTree

    return {c.kind: c for c in (DecisionTree, LinearDiscriminant, GaussianNB, KNearestNeighbors)}


def model_from_json(text: str) -> Classifier:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_TAG:
        raise ValueError("not a proxtrace model file")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    cls = _registry()[doc["kind"]]
    return cls.from_params(doc["n_features"], doc["params"])


def load_model(path) -> Classifier:
    return model_from_json(Path(path).read_text())
