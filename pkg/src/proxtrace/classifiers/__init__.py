"""Hand-written risk classifiers and their evaluation."""
from .base import NEG, POS, Classifier, load_model, model_from_json
from .bayes import GaussianNB, train_nb
from .evaluation import KINDS, evaluate_repeated, pr_curve_from_scores, precision_recall_curve, train
from .knn import KNearestNeighbors, train_knn
from .lda import LinearDiscriminant, train_lda
from .metrics import ConfusionCounts, Metrics, MetricsReport, MetricSummary, confusion, metrics
from .tree import DecisionTree, train_dt

__all__ = [
    "NEG", "POS", "Classifier", "load_model", "model_from_json",
    "GaussianNB", "train_nb", "KNearestNeighbors", "train_knn",
    "LinearDiscriminant", "train_lda", "DecisionTree", "train_dt",
    "KINDS", "evaluate_repeated", "pr_curve_from_scores", "precision_recall_curve", "train",
    "ConfusionCounts", "Metrics", "MetricsReport", "MetricSummary", "confusion", "metrics",
]
