"""Scalar evaluation metrics and dataset-level performance bounds.

Fractions in [0, 1] everywhere; report writers multiply by 100 when they
print paper-style percentage tables.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from scipy.stats import t as t_dist

from .errors import UsageError
from .redundancy import RedundancyReport


@dataclass(frozen=True)
class ClassStats:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    weighted_f1: float
    per_class: dict[str, ClassStats]

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "weighted_f1": self.weighted_f1,
            "per_class": {
                label: {
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                }
                for label, s in sorted(self.per_class.items())
            },
        }


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    p_value: float
    n: int

    def to_json_dict(self) -> dict:
        return {"rho": self.rho, "p_value": self.p_value, "n": self.n}


def _check_pair(preds: Sequence[str], truth: Sequence[str]) -> None:
    if len(preds) != len(truth):
        raise UsageError(f"length mismatch: {len(preds)} preds vs {len(truth)} truth")
    if len(truth) == 0:
        raise UsageError("empty prediction list")


def accuracy(preds: Sequence[str], truth: Sequence[str]) -> float:
    """Fraction of exact label matches."""
    _check_pair(preds, truth)
    return sum(p == t for p, t in zip(preds, truth)) / len(truth)


def weighted_f1(preds: Sequence[str], truth: Sequence[str]) -> EvalResult:
    """Per-class precision/recall/F1 plus support-weighted F1.

    Classes that appear only in the predictions get support 0 and thus no
    weight in the aggregate.
    """
    _check_pair(preds, truth)
    labels = sorted(set(truth) | set(preds))
    support = Counter(truth)
    tp: Counter = Counter()
    fp: Counter = Counter()
    fn: Counter = Counter()
    for p, t in zip(preds, truth):
        if p == t:
            tp[t] += 1
        else:
            fp[p] += 1
            fn[t] += 1

    per_class: dict[str, ClassStats] = {}
    total = len(truth)
    wf1 = 0.0
    for label in labels:
        denom_p = tp[label] + fp[label]
        denom_r = tp[label] + fn[label]
        precision = tp[label] / denom_p if denom_p else 0.0
        recall = tp[label] / denom_r if denom_r else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        per_class[label] = ClassStats(precision, recall, f1, support[label])
        wf1 += f1 * support[label] / total
    return EvalResult(accuracy=accuracy(preds, truth), weighted_f1=wf1, per_class=per_class)


def max_achievable_accuracy(report: RedundancyReport) -> float:
    """Upper bound on accuracy for any classifier that is a function of the
    packet sequence: uniques and same-class duplicates can all be correct,
    and each mixed cluster contributes at most its majority-label count."""
    if report.n_total <= 0:
        raise UsageError("n_total must be positive")
    majority_sum = sum(c.majority_count for c in report.clusters if c.is_mixed)
    return (report.n_unique + report.n_same_class_dup + majority_sum) / report.n_total


def minimal_fpr(report: RedundancyReport, benign_labels: Iterable[str]) -> float:
    """Lower bound on the false-positive rate when every cluster touched by
    a malicious sample must be flagged malicious.

    Labels absent from ``benign_labels`` count as malicious. Benign samples
    inside malicious-touched clusters are unavoidable false positives.
    """
    benign = set(benign_labels)
    total_benign = sum(
        count for label, count in report.label_counts.items() if label in benign
    )
    if total_benign == 0:
        raise UsageError("minimal_fpr needs at least one benign sample")
    false_positives = 0
    for cluster in report.clusters:
        has_malicious = any(label not in benign for label in cluster.label_counts)
        if has_malicious:
            false_positives += sum(
                count for label, count in cluster.label_counts.items() if label in benign
            )
    return false_positives / total_benign


def _mean_ranks(values: Sequence[float]) -> list[float]:
    """Average ranks (1-based); ties share the mean of their rank range."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """Spearman rank correlation with mean ranks for ties; the two-sided
    p-value uses the t approximation t = rho * sqrt((n-2) / (1-rho^2))."""
    if len(x) != len(y):
        raise UsageError("x and y must have equal length")
    n = len(x)
    if n < 3:
        raise UsageError("spearman needs at least 3 observations")
    rx = _mean_ranks(x)
    ry = _mean_ranks(y)
    mx = sum(rx) / n
    my = sum(ry) / n
    sxx = sum((a - mx) ** 2 for a in rx)
    syy = sum((b - my) ** 2 for b in ry)
    if sxx == 0 or syy == 0:
        raise UsageError("spearman undefined: zero variance in ranks")
    rho = sum((a - mx) * (b - my) for a, b in zip(rx, ry)) / math.sqrt(sxx * syy)
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        p_value = 0.0
    else:
        t_stat = rho * math.sqrt((n - 2) / (1 - rho * rho))
        p_value = 2 * float(t_dist.sf(abs(t_stat), df=n - 2))
    return CorrelationResult(rho=rho, p_value=p_value, n=n)


def gap(best_baseline: float, max_acc: float) -> float:
    """Headroom between a baseline score and the dataset's accuracy bound,
    both on the percent scale."""
    for name, v in (("best_baseline", best_baseline), ("max_acc", max_acc)):
        if not 0 <= v <= 100:
            raise UsageError(f"{name} must be on the percent scale [0, 100]")
    return max_acc - best_baseline


def mean_std(values: Sequence[float]) -> tuple[float, float | None]:
    """Mean and sample standard deviation; std is None for a single value."""
    if not values:
        raise UsageError("cannot aggregate zero values")
    mean = sum(values) / len(values)
    if len(values) == 1:
        return mean, None
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)
