# csmil/evaluation/metrics.py
import logging
from typing import List, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from csmil.core.errors import PreconditionError, UndefinedMetricError

from .schemas import Confusion, MetricReport

logger = logging.getLogger(__name__)

THRESHOLD = 0.5


def confusion(scores: np.ndarray, labels: np.ndarray, threshold: float = THRESHOLD) -> Confusion:
    predicted = scores >= threshold
    positive = labels == 1
    return Confusion(
        tp=int(np.sum(predicted & positive)),
        fp=int(np.sum(predicted & ~positive)),
        tn=int(np.sum(~predicted & ~positive)),
        fn=int(np.sum(~predicted & positive)),
    )


def f1_score(c: Confusion) -> float:
    denominator = 2 * c.tp + c.fp + c.fn
    return 2 * c.tp / denominator if denominator else 0.0


def auc_score(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney form of the pair-counting AUC; ties get half credit through midranks"""
    positive = labels == 1
    n_pos = int(positive.sum())
    n_neg = labels.size - n_pos
    ranks = rankdata(scores, method="average")
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_curve(scores: np.ndarray, labels: np.ndarray) -> List[Tuple[float, float]]:
    """(fpr, tpr) at every distinct threshold, from (0, 0) to (1, 1)"""
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_positive = labels[order] == 1
    tps = np.cumsum(sorted_positive)
    fps = np.cumsum(~sorted_positive)
    # last index of each run of equal scores
    cut = np.flatnonzero(np.diff(sorted_scores) != 0)
    cut = np.append(cut, scores.size - 1)
    n_pos, n_neg = tps[-1], fps[-1]
    points = [(0.0, 0.0)]
    points.extend((float(fps[i] / n_neg), float(tps[i] / n_pos)) for i in cut)
    return points


def roc_area(roc: Sequence[Tuple[float, float]]) -> float:
    fpr = np.array([p[0] for p in roc])
    tpr = np.array([p[1] for p in roc])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def compute_metrics(scores: Sequence[float], labels: Sequence[int]) -> MetricReport:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise PreconditionError(f"scores {scores.shape} and labels {labels.shape} must be equal-length vectors")
    if scores.size == 0:
        raise PreconditionError("cannot score an empty set")
    if not np.all(np.isfinite(scores)):
        raise PreconditionError("scores contain non-finite values")

    c = confusion(scores, labels)
    accuracy = (c.tp + c.tn) / labels.size
    f1 = f1_score(c)

    if np.unique(labels).size < 2:
        partial = MetricReport(accuracy=accuracy, f1=f1, auc=None, roc=[], confusion=c)
        raise UndefinedMetricError("AUC is undefined when labels contain a single class", partial=partial)

    return MetricReport(
        accuracy=accuracy,
        f1=f1,
        auc=auc_score(scores, labels),
        roc=roc_curve(scores, labels),
        confusion=c,
    )


def safe_metrics(scores: Sequence[float], labels: Sequence[int]) -> MetricReport:
    """compute_metrics, falling back to the partial report when AUC is undefined"""
    try:
        return compute_metrics(scores, labels)
    except UndefinedMetricError as e:
        logger.warning(f"{e.detail}; reporting accuracy and F1 only")
        return e.partial


def mean_report(reports: Sequence[MetricReport]) -> MetricReport:
    """Fold average: accuracy/F1/AUC averaged, confusion counts summed, no ROC"""
    if not reports:
        raise PreconditionError("no reports to average")
    aucs = [r.auc for r in reports if r.auc is not None]
    total = Confusion(
        tp=sum(r.confusion.tp for r in reports),
        fp=sum(r.confusion.fp for r in reports),
        tn=sum(r.confusion.tn for r in reports),
        fn=sum(r.confusion.fn for r in reports),
    )
    return MetricReport(
        accuracy=float(np.mean([r.accuracy for r in reports])),
        f1=float(np.mean([r.f1 for r in reports])),
        auc=float(np.mean(aucs)) if len(aucs) == len(reports) else None,
        roc=[],
        confusion=total,
    )
