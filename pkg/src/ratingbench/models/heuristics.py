"""Dataset-statistics baselines: global, candidate-item and user-past averages."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

HEURISTIC_KINDS = ("global", "item", "user")


@dataclass(frozen=True)
class HeuristicStats:
    global_mean: float
    per_item: dict[str, tuple[float, int]]  # item -> (sum, count)
    per_user: dict[str, tuple[float, int]]

    def item_mean(self, item_id: str) -> float:
        s = self.per_item.get(item_id)
        return self.global_mean if s is None else s[0] / s[1]

    def user_mean(self, user_id: str) -> float:
        s = self.per_user.get(user_id)
        return self.global_mean if s is None else s[0] / s[1]


def fit_heuristics(train: Iterable) -> HeuristicStats:
    """Exact means over training ratings.

    Accepts anything with ``user_id``, ``item_id`` and either ``rating`` or
    ``label`` (interactions or examples).
    """
    total, count = 0.0, 0
    items: dict[str, list] = {}
    users: dict[str, list] = {}
    for x in train:
        r = float(x.rating if hasattr(x, "rating") else x.label)
        total += r
        count += 1
        a = items.setdefault(x.item_id, [0.0, 0])
        a[0] += r
        a[1] += 1
        a = users.setdefault(x.user_id, [0.0, 0])
        a[0] += r
        a[1] += 1
    if count == 0:
        raise ValueError("cannot fit heuristics on an empty training set")
    return HeuristicStats(total / count,
                          {k: (v[0], v[1]) for k, v in items.items()},
                          {k: (v[0], v[1]) for k, v in users.items()})


def predict_heuristic(stats: HeuristicStats, kind: str, user_id: str, item_id: str) -> float:
    if kind == "global":
        value = stats.global_mean
    elif kind == "item":
        value = stats.item_mean(item_id)
    elif kind == "user":
        value = stats.user_mean(user_id)
    else:
        raise ValueError(f"unknown heuristic {kind!r}; expected one of {HEURISTIC_KINDS}")
    return min(5.0, max(1.0, value))


def predict_examples(stats: HeuristicStats, kind: str, examples: Sequence) -> np.ndarray:
    return np.array([predict_heuristic(stats, kind, ex.user_id, ex.item_id) for ex in examples])
