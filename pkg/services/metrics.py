"""
Metrics Service
AUC, accuracy and recall at a fixed threshold, gradient-norm statistics and report formatting
"""

import logging
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from models.report_models import BenchRow, EvalReport, GradNormStats

logger = logging.getLogger(__name__)


def _as_binary(labels) -> np.ndarray:
    labels = np.asarray(labels).reshape(-1)
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise MetricsError("Labels must be 0 or 1")
    return labels.astype(np.int64)


def auc(scores, labels) -> float:
    """
    Mann-Whitney AUC: P(score_pos > score_neg) + P(tie) / 2

    Args:
        scores: Real scores (higher means positive)
        labels: Binary labels

    Returns:
        AUC in [0, 1]
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = _as_binary(labels)
    if scores.shape != labels.shape:
        raise MetricsError(f"{scores.size} scores for {labels.size} labels")
    positives = int(labels.sum())
    negatives = labels.size - positives
    if positives == 0 or negatives == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    # average ranks give ties half credit
    ranks = rankdata(scores, method="average")
    u = ranks[labels == 1].sum() - positives * (positives + 1) / 2.0
    return float(u / (positives * negatives))


def confusion_counts(scores, labels, threshold: float = 0.5) -> Tuple[int, int, int, int]:
    """(TP, FP, TN, FN) with prediction 1 iff score >= threshold"""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = _as_binary(labels)
    predicted = scores >= threshold
    actual = labels == 1
    return (
        int(np.sum(predicted & actual)),
        int(np.sum(predicted & ~actual)),
        int(np.sum(~predicted & ~actual)),
        int(np.sum(~predicted & actual)),
    )


def accuracy_recall(scores, labels, threshold: float = 0.5) -> Tuple[float, Optional[float]]:
    """Accuracy and recall; recall is None (and logged) without positives"""
    tp, fp, tn, fn = confusion_counts(scores, labels, threshold)
    n = tp + fp + tn + fn
    if n == 0:
        raise UndefinedMetricError("Accuracy of an empty set is undefined")
    accuracy = (tp + tn) / n
    if tp + fn == 0:
        logger.warning("Recall undefined: no positive labels")
        return accuracy, None
    return accuracy, tp / (tp + fn)


def grad_norm_stats(norms: Iterable[float], label: str = "") -> GradNormStats:
    """Median and quartiles of per-example gradient norms (midpoint median)"""
    values = np.asarray(list(norms) if not isinstance(norms, np.ndarray) else norms, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise MetricsError("Gradient-norm statistics need at least one norm")
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return GradNormStats(label=label, median=float(median), q1=float(q1), q3=float(q3), count=int(values.size))


def evaluate_scores(scores, labels, threshold: float = 0.5, label: str = "test",
                    epsilon: Optional[float] = None, delta: Optional[float] = None) -> EvalReport:
    tp, fp, tn, fn = confusion_counts(scores, labels, threshold)
    accuracy, recall = accuracy_recall(scores, labels, threshold)
    try:
        area = auc(scores, labels)
    except UndefinedMetricError:
        logger.warning(f"AUC undefined for '{label}': single-class labels")
        area = None
    return EvalReport(
        label=label, accuracy=accuracy, auc=area, recall=recall, threshold=threshold,
        tp=tp, fp=fp, tn=tn, fn=fn, n=tp + fp + tn + fn, epsilon=epsilon, delta=delta,
    )


# -- formatting ---------------------------------------------------------

def _cell(value, width: int, digits: int = 4) -> str:
    if value is None:
        return "n/a".rjust(width)
    if isinstance(value, float):
        return f"{value:.{digits}f}".rjust(width)
    return str(value).rjust(width)


def format_eval_table(reports: Sequence[EvalReport]) -> str:
    """Aligned table: label, epsilon, accuracy, AUC, recall, n"""
    name_width = max([len("run")] + [len(r.label) for r in reports])
    header = f"{'run'.ljust(name_width)}  {'epsilon':>8}  {'accuracy':>8}  {'AUC':>8}  {'recall':>8}  {'n':>8}"
    lines = [header, "-" * len(header)]
    for r in reports:
        eps = "inf" if r.epsilon == float("inf") else r.epsilon
        lines.append(
            f"{r.label.ljust(name_width)}  {_cell(eps, 8, 2)}  {_cell(r.accuracy, 8)}  "
            f"{_cell(r.auc, 8)}  {_cell(r.recall, 8)}  {_cell(r.n, 8)}"
        )
    return "\n".join(lines)


def format_grad_norm_table(rows: Sequence[GradNormStats]) -> str:
    name_width = max([len("features")] + [len(r.label) for r in rows])
    header = f"{'features'.ljust(name_width)}  {'median L2':>10}  {'q1':>10}  {'q3':>10}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r.label.ljust(name_width)}  {r.median:>10.3f}  {r.q1:>10.3f}  {r.q3:>10.3f}")
    return "\n".join(lines)


def format_bench_table(rows: Sequence[BenchRow]) -> str:
    name_width = max([len("variant")] + [len(r.variant) for r in rows])
    header = (f"{'variant'.ljust(name_width)}  {'median s':>10}  {'ct-ct':>7}  {'plain':>7}  "
              f"{'mult ops':>9}  {'adds':>7}")
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.variant.ljust(name_width)}  {r.median_seconds:>10.3f}  {r.ct_mul:>7}  {r.plain_mul:>7}  "
            f"{r.multiplicative:>9}  {r.add:>7}"
        )
    return "\n".join(lines)


def report_line(report) -> str:
    """Machine-readable single-line JSON"""
    return report.model_dump_json()


class MetricsError(Exception):
    """Custom exception for evaluation metric errors"""
    pass


class UndefinedMetricError(MetricsError):
    """Metric is undefined for the given labels"""
    pass
