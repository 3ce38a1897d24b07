"""Rating prediction metrics.

AUC treats labels ``>= 4`` as positives and uses average ranks for tied
predictions, so a constant predictor scores exactly 0.5.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

POSITIVE_THRESHOLD = 4.0


class UndefinedMetricError(ValueError):
    """AUC requested on a slice containing only one class."""


def _pairs(predictions, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if p.shape != y.shape:
        raise ValueError(f"{p.size} predictions vs {y.size} labels")
    if p.size == 0:
        raise ValueError("metric of an empty set")
    if not np.all(np.isfinite(p)):
        raise ValueError("predictions must be finite")
    return p, y


def rmse(predictions, labels) -> float:
    p, y = _pairs(predictions, labels)
    d = p - y
    return math.sqrt(float(d @ d) / d.size)


def mae(predictions, labels) -> float:
    p, y = _pairs(predictions, labels)
    return float(np.abs(p - y).mean())


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties sharing the mean of the ranks they span."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], sorted_vals.size]
    group_rank = (starts + ends + 1) / 2.0  # mean of ranks starts+1 .. ends
    ranks = np.empty(values.size, dtype=np.float64)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def auc_roc(predictions, labels, positive_threshold: float = POSITIVE_THRESHOLD) -> float:
    """Mann-Whitney AUC: P(score of a random positive > score of a random negative)."""
    p, y = _pairs(predictions, labels)
    pos = y >= positive_threshold
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"AUC undefined with {n_pos} positives and {n_neg} negatives")
    rank_sum = average_ranks(p)[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_bruteforce(predictions, labels, positive_threshold: float = POSITIVE_THRESHOLD) -> float:
    """O(P*N) reference: compare every positive with every negative, ties count half."""
    p, y = _pairs(predictions, labels)
    pos, neg = p[y >= positive_threshold], p[y < positive_threshold]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("AUC undefined for a single class")
    wins = 0.0
    for s in pos:
        wins += float(np.sum(s > neg)) + 0.5 * float(np.sum(s == neg))
    return wins / (pos.size * neg.size)


@dataclass
class MetricsReport:
    rmse: float
    mae: float
    auc: float | None
    n: int
    n_parse_failures: int = 0
    n_fallbacks: int = 0
    auc_error: str | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    CSV_FIELDS = ("rmse", "mae", "auc", "n", "n_parse_failures", "n_fallbacks")

    def csv_row(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["" if getattr(self, f) is None else getattr(self, f) for f in self.CSV_FIELDS])
        return buf.getvalue()

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls.CSV_FIELDS) + "\n"


def evaluate(predictions, labels, n_parse_failures: int = 0, n_fallbacks: int = 0,
             positive_threshold: float = POSITIVE_THRESHOLD) -> MetricsReport:
    """All three metrics at once; a single-class slice records its AUC error instead of NaN."""
    try:
        auc, auc_error = auc_roc(predictions, labels, positive_threshold), None
    except UndefinedMetricError as exc:
        auc, auc_error = None, str(exc)
    return MetricsReport(rmse(predictions, labels), mae(predictions, labels), auc,
                         int(np.asarray(labels).size), n_parse_failures, n_fallbacks, auc_error)


class MetricsAccumulator:
    """Collects (prediction, label) pairs from shards; ``merge`` then ``report``."""

    def __init__(self):
        self._preds: list[np.ndarray] = []
        self._labels: list[np.ndarray] = []
        self.n_parse_failures = 0
        self.n_fallbacks = 0

    def add(self, predictions, labels) -> None:
        self._preds.append(np.atleast_1d(np.asarray(predictions, dtype=np.float64)))
        self._labels.append(np.atleast_1d(np.asarray(labels, dtype=np.float64)))

    def merge(self, other: "MetricsAccumulator") -> "MetricsAccumulator":
        self._preds.extend(other._preds)
        self._labels.extend(other._labels)
        self.n_parse_failures += other.n_parse_failures
        self.n_fallbacks += other.n_fallbacks
        return self

    def report(self) -> MetricsReport:
        return evaluate(np.concatenate(self._preds), np.concatenate(self._labels),
                        self.n_parse_failures, self.n_fallbacks)
