"""Vocabularies and sparse-id encoding of items, histories and users.

Titles are split on whitespace only (no casing or punctuation changes), so
``"Toy Story (1995)"`` yields ``Toy``, ``Story`` and ``(1995)``. Id 0 of every
vocabulary is reserved for unknown tokens, which is how cold-start users and
test-only items stay representable.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .dataset import DEFAULT_MAX_HISTORY, Interaction, ItemMeta, RatingExample

UNKNOWN_TOKEN = "<unk>"
UNKNOWN_ID = 0
MAX_TITLE_TOKENS = 32
MAX_ATTRIBUTES = 16


def tokenize_title(title: str) -> list[str]:
    return title.split()


@dataclass
class Vocab:
    tokens: list[str] = field(default_factory=lambda: [UNKNOWN_TOKEN])
    counts: list[int] = field(default_factory=lambda: [0])

    def __post_init__(self):
        if not self.tokens or self.tokens[0] != UNKNOWN_TOKEN:
            raise ValueError("id 0 must be the unknown token")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self._index = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def from_counts(cls, counts: Counter, min_count: int = 1) -> "Vocab":
        # sort by descending count, then token, so ids never depend on dict order
        kept = sorted((t for t, c in counts.items() if c >= min_count and t != UNKNOWN_TOKEN),
                      key=lambda t: (-counts[t], t))
        return cls([UNKNOWN_TOKEN, *kept], [0, *(counts[t] for t in kept)])

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def unknown_id(self) -> int:
        return UNKNOWN_ID

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index and token != UNKNOWN_TOKEN

    def lookup(self, token: str) -> int:
        return self._index.get(token, UNKNOWN_ID)

    def to_json(self) -> list[dict]:
        return [{"token": t, "id": i, "count": c} for i, (t, c) in enumerate(zip(self.tokens, self.counts))]

    @classmethod
    def from_json(cls, records: list[dict]) -> "Vocab":
        records = sorted(records, key=lambda r: r["id"])
        if [r["id"] for r in records] != list(range(len(records))):
            raise ValueError("vocabulary ids must be dense from 0")
        return cls([r["token"] for r in records], [int(r["count"]) for r in records])


class Vocabs(NamedTuple):
    title: Vocab
    attribute: Vocab
    item: Vocab
    user: Vocab

    def save(self, directory: str | os.PathLike) -> None:
        os.makedirs(directory, exist_ok=True)
        for name, vocab in self._asdict().items():
            with open(os.path.join(directory, f"{name}_vocab.json"), "w", encoding="utf-8") as fh:
                json.dump(vocab.to_json(), fh, ensure_ascii=False, indent=0)

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "Vocabs":
        loaded = {}
        for name in cls._fields:
            with open(os.path.join(directory, f"{name}_vocab.json"), encoding="utf-8") as fh:
                loaded[name] = Vocab.from_json(json.load(fh))
        return cls(**loaded)


def build_vocabs(train: Iterable[Interaction | RatingExample], catalog: dict[str, ItemMeta],
                 min_count: int = 2, attribute_min_count: int = 1) -> Vocabs:
    """Fit all four vocabularies on the training split.

    Title tokens are counted once per distinct training item; tokens seen in
    fewer than ``min_count`` titles fall back to the unknown id.
    """
    train = list(train)
    if not catalog:
        raise ValueError("catalog is empty")
    users: Counter = Counter()
    items: Counter = Counter()
    for x in train:
        users[x.user_id] += 1
        items[x.item_id] += 1
    title_counts: Counter = Counter()
    attr_counts: Counter = Counter()
    for item_id in items:
        meta = catalog[item_id]
        title_counts.update(tokenize_title(meta.title))
        attr_counts.update(set(meta.attributes))
    return Vocabs(
        title=Vocab.from_counts(title_counts, min_count),
        attribute=Vocab.from_counts(attr_counts, attribute_min_count),
        item=Vocab.from_counts(items, 1),
        user=Vocab.from_counts(users, 1),
    )


def rating_bucket(rating: float) -> int:
    """Map a 1-5 rating to a class id 0-4 (half stars round to even)."""
    if not 1.0 <= rating <= 5.0:
        raise ValueError(f"rating {rating} outside [1, 5]")
    return int(round(rating)) - 1


@dataclass(frozen=True)
class ItemFeatures:
    item_index: int
    title_token_ids: tuple[int, ...]
    attribute_ids: tuple[int, ...]
    rating_bucket: int | None = None


@dataclass(frozen=True)
class EncodedExample:
    user_index: int
    candidate: ItemFeatures
    history: tuple[ItemFeatures, ...]
    label: float


def encode_item(meta: ItemMeta, vocabs: Vocabs, rating: float | None = None) -> ItemFeatures:
    return ItemFeatures(
        item_index=vocabs.item.lookup(meta.item_id),
        title_token_ids=tuple(vocabs.title.lookup(t) for t in tokenize_title(meta.title)),
        attribute_ids=tuple(sorted({vocabs.attribute.lookup(a) for a in meta.attributes})),
        rating_bucket=None if rating is None else rating_bucket(rating),
    )


def encode_example(example: RatingExample, vocabs: Vocabs) -> EncodedExample:
    rating_bucket(example.label)  # validates the label range
    return EncodedExample(
        user_index=vocabs.user.lookup(example.user_id),
        candidate=encode_item(example.candidate, vocabs),
        history=tuple(encode_item(h.item, vocabs, h.rating) for h in example.history),
        label=float(example.label),
    )


# ---------------------------------------------------------------------------
# array form used by the models


@dataclass(frozen=True)
class ItemTable:
    """Per-catalog-row item features, padded with -1."""

    row_of: dict[str, int]
    item_index: np.ndarray  # [n_rows]
    title_ids: np.ndarray  # [n_rows, T]
    attribute_ids: np.ndarray  # [n_rows, A]

    @classmethod
    def build(cls, catalog: dict[str, ItemMeta], vocabs: Vocabs,
              max_title_tokens: int = MAX_TITLE_TOKENS, max_attributes: int = MAX_ATTRIBUTES) -> "ItemTable":
        keys = sorted(catalog)
        feats = [encode_item(catalog[k], vocabs) for k in keys]
        t = max(1, min(max_title_tokens, max((len(f.title_token_ids) for f in feats), default=1)))
        a = max(1, min(max_attributes, max((len(f.attribute_ids) for f in feats), default=1)))
        titles = np.full((len(keys), t), -1, dtype=np.int32)
        attrs = np.full((len(keys), a), -1, dtype=np.int32)
        for r, f in enumerate(feats):
            ids = f.title_token_ids[:t]
            titles[r, :len(ids)] = ids
            ids = f.attribute_ids[:a]
            attrs[r, :len(ids)] = ids
        item_index = np.array([f.item_index for f in feats], dtype=np.int32)
        return cls({k: r for r, k in enumerate(keys)}, item_index, titles, attrs)


@dataclass(frozen=True)
class EncodedData:
    """Column-oriented encoding of a list of examples.

    Histories are right-aligned: the most recent prior rating sits in the last
    slot and empty slots hold catalog row -1.
    """

    table: ItemTable
    user: np.ndarray  # [N]
    item: np.ndarray  # [N] item vocab id
    cand_row: np.ndarray  # [N] catalog row
    hist_rows: np.ndarray  # [N, H]
    hist_bucket: np.ndarray  # [N, H]
    hist_len: np.ndarray  # [N]
    label: np.ndarray  # [N]

    def __len__(self) -> int:
        return len(self.label)

    @property
    def max_history(self) -> int:
        return self.hist_rows.shape[1]

    def subset(self, idx) -> "EncodedData":
        idx = np.asarray(idx)
        return EncodedData(self.table, self.user[idx], self.item[idx], self.cand_row[idx],
                           self.hist_rows[idx], self.hist_bucket[idx], self.hist_len[idx],
                           self.label[idx])

    def head_fraction(self, fraction: float) -> "EncodedData":
        """The chronologically earliest ``fraction`` of rows (at least one)."""
        if not 0.0 < fraction <= 1.0:
            raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
        n = max(1, int(round(fraction * len(self))))
        return self.subset(np.arange(n))


def encode_dataset(examples: Sequence[RatingExample], vocabs: Vocabs, table: ItemTable,
                   max_history: int = DEFAULT_MAX_HISTORY) -> EncodedData:
    n = len(examples)
    user = np.empty(n, dtype=np.int32)
    item = np.empty(n, dtype=np.int32)
    cand_row = np.empty(n, dtype=np.int32)
    hist_rows = np.full((n, max_history), -1, dtype=np.int32)
    hist_bucket = np.zeros((n, max_history), dtype=np.int32)
    hist_len = np.empty(n, dtype=np.int32)
    label = np.empty(n, dtype=np.float64)
    row_of = table.row_of
    user_lookup, item_lookup = vocabs.user.lookup, vocabs.item.lookup
    for i, ex in enumerate(examples):
        if len(ex.history) > max_history:
            raise ValueError(f"example {ex.order} has {len(ex.history)} history steps > {max_history}")
        user[i] = user_lookup(ex.user_id)
        item[i] = item_lookup(ex.candidate.item_id)
        cand_row[i] = row_of[ex.candidate.item_id]
        label[i] = ex.label
        k = len(ex.history)
        hist_len[i] = k
        if k:
            hist_rows[i, max_history - k:] = [row_of[h.item.item_id] for h in ex.history]
            hist_bucket[i, max_history - k:] = [int(round(h.rating)) - 1 for h in ex.history]
    if n and (label.min() < 1.0 or label.max() > 5.0):
        raise ValueError("labels must lie in [1, 5]")
    return EncodedData(table, user, item, cand_row, hist_rows, hist_bucket, hist_len, label)
