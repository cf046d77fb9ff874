from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import NEG, POS

METRIC_NAMES = ("precision", "recall", "f1", "accuracy")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(y_true, y_pred) -> ConfusionCounts:
    """Counts with +1 as the positive (high-risk) class."""
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {p.shape}")
    return ConfusionCounts(
        tp=int(np.sum((t == POS) & (p == POS))),
        tn=int(np.sum((t == NEG) & (p == NEG))),
        fp=int(np.sum((t == NEG) & (p == POS))),
        fn=int(np.sum((t == POS) & (p == NEG))),
    )


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    accuracy: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.precision, self.recall, self.f1, self.accuracy)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def metrics(c: ConfusionCounts) -> Metrics:
    p = _ratio(c.tp, c.tp + c.fp)
    r = _ratio(c.tp, c.tp + c.fn)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return Metrics(p, r, f1, _ratio(c.tp + c.tn, c.total))


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    ci_lo: float
    ci_hi: float

    @classmethod
    def from_samples(cls, values) -> "MetricSummary":
        v = np.asarray(values, dtype=float)
        mean = float(v.mean())
        lo, hi = (float(q) for q in np.percentile(v, [2.5, 97.5]))
        # float summation can leave the mean a hair outside a degenerate band
        return cls(mean, min(lo, mean), max(hi, mean))


@dataclass(frozen=True)
class MetricsReport:
    classifier: str
    precision: MetricSummary
    recall: MetricSummary
    f1: MetricSummary
    accuracy: MetricSummary
    reps: int

    def rows(self) -> list[tuple[str, str, float, float, float]]:
        return [(self.classifier, m, s.mean, s.ci_lo, s.ci_hi)
                for m in METRIC_NAMES for s in [getattr(self, m)]]
