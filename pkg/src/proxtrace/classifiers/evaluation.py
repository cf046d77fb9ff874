"""Repeated random holdout evaluation and precision/recall sweeps."""
from __future__ import annotations

from collections.abc import Callable, Mapping

import numpy as np

from ..errors import DegenerateDataError
from .base import NEG, POS, Classifier
from .bayes import train_nb
from .knn import train_knn
from .lda import train_lda
from .metrics import METRIC_NAMES, MetricSummary, MetricsReport, confusion, metrics
from .tree import train_dt

TRAINERS: dict[str, Callable[..., Classifier]] = {
    "DT": train_dt,
    "LDA": train_lda,
    "NB": train_nb,
    "KNN": train_knn,
}
KINDS = tuple(TRAINERS)


def train(kind: str, X, y, **hyper) -> Classifier:
    try:
        fn = TRAINERS[kind.upper()]
    except KeyError:
        raise ValueError(f"unknown classifier {kind!r}; choose from {', '.join(KINDS)}") from None
    return fn(X, y, **hyper)


def holdout_split(n: int, split_frac: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n_train = int(round(split_frac * n))
    n_train = min(max(n_train, 1), n - 1)
    perm = rng.permutation(n)
    return perm[:n_train], perm[n_train:]


def evaluate_repeated(
    X,
    y,
    kind: str,
    hyper: Mapping | None = None,
    split_frac: float = 0.8,
    reps: int = 100,
    seed: int = 0,
) -> MetricsReport:
    """Mean and empirical 95% band of each metric over ``reps`` random splits.

    Repetition ``i`` draws its split from child ``i`` of ``SeedSequence(seed)``,
    so results do not depend on evaluation order.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if reps < 2:
        raise ValueError("need reps >= 2 for a confidence interval")
    if not 0 < split_frac < 1:
        raise ValueError("split_frac must lie in (0, 1)")
    if X.shape[0] < 2 or len(np.unique(y)) < 2:
        raise DegenerateDataError("evaluation needs rows of both classes")
    hyper = dict(hyper or {})
    scores = np.empty((reps, len(METRIC_NAMES)))
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(reps)):
        tr, te = holdout_split(X.shape[0], split_frac, np.random.default_rng(child))
        model = train(kind, X[tr], y[tr], **hyper)
        scores[i] = metrics(confusion(y[te], model.predict(X[te]))).as_tuple()
    summaries = [MetricSummary.from_samples(scores[:, j]) for j in range(len(METRIC_NAMES))]
    return MetricsReport(kind.upper(), *summaries, reps=reps)


def pr_curve_from_scores(y_true, scores) -> list[tuple[float, float, float]]:
    """``(threshold, recall, precision)`` for every distinct score, ascending.

    A row counts as positive when its score is >= threshold, so recall never
    increases along the list.
    """
    y = np.asarray(y_true)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise ValueError("labels and scores differ in length")
    n_pos = int(np.sum(y == POS))
    if n_pos == 0 or n_pos == y.size or np.any((y != POS) & (y != NEG)):
        raise DegenerateDataError("precision/recall curve needs both classes")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    tp = np.cumsum(y[order] == POS)
    # last index of each run of equal scores, walking from high to low
    ends = np.nonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])[0]
    points = [(float(s_sorted[e]), float(tp[e] / n_pos), float(tp[e] / (e + 1))) for e in ends]
    return points[::-1]


def precision_recall_curve(model: Classifier, X, y) -> list[tuple[float, float, float]]:
    return pr_curve_from_scores(y, model.score(X))
