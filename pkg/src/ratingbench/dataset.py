"""Rating dataset ingestion, chronological splitting and example construction.

Raw MovieLens-1M (``::``-delimited, Latin-1) and Amazon review (JSON-lines,
UTF-8) files are parsed into :class:`Interaction` records plus an item catalog.
The split is global: every rating of every user is sorted by
``(timestamp, user_id, item_id)`` and the earliest fraction becomes train.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import json
import math
import os
from collections import defaultdict, deque
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable, Iterator, Literal, NamedTuple, Sequence, Union

import numpy as np

ByteSource = Union[str, os.PathLike, IO[bytes]]

DEFAULT_MAX_HISTORY = 10


class DatasetFormatError(ValueError):
    """A raw record could not be parsed; the whole load is aborted."""

    def __init__(self, source: str, location: str, message: str):
        self.source = source
        self.location = location
        super().__init__(f"{source}: {location}: {message}")


@dataclass(frozen=True, slots=True)
class Interaction:
    user_id: str
    item_id: str
    rating: float
    timestamp: int

    def sort_key(self) -> tuple[int, str, str]:
        return (self.timestamp, self.user_id, self.item_id)

    def to_json(self) -> dict:
        return {"user_id": self.user_id, "item_id": self.item_id,
                "rating": self.rating, "timestamp": self.timestamp}

    @classmethod
    def from_json(cls, record: dict) -> "Interaction":
        return cls(str(record["user_id"]), str(record["item_id"]),
                   float(record["rating"]), int(record["timestamp"]))


@dataclass(frozen=True, slots=True)
class ItemMeta:
    item_id: str
    title: str
    attributes: tuple[str, ...] = ()
    missing: bool = False

    def to_json(self) -> dict:
        return {"item_id": self.item_id, "title": self.title,
                "attributes": list(self.attributes), "missing": self.missing}

    @classmethod
    def from_json(cls, record: dict) -> "ItemMeta":
        return cls(str(record["item_id"]), record["title"],
                   tuple(record.get("attributes", ())), bool(record.get("missing", False)))


class LoadedDataset(NamedTuple):
    interactions: list[Interaction]
    catalog: dict[str, ItemMeta]
    n_skipped: int = 0


@dataclass(frozen=True)
class ChronSplit:
    train: tuple[Interaction, ...]
    test: tuple[Interaction, ...]
    boundary_timestamp: int
    train_fraction: float

    def __len__(self) -> int:
        return len(self.train) + len(self.test)


class HistoryEntry(NamedTuple):
    item: ItemMeta
    rating: float
    timestamp: int
    order: int  # position in the global chronological order


@dataclass(frozen=True, slots=True)
class RatingExample:
    user_id: str
    candidate: ItemMeta
    label: float
    timestamp: int
    history: tuple[HistoryEntry, ...] = ()
    order: int = 0  # position of the candidate in the global chronological order

    @property
    def item_id(self) -> str:
        return self.candidate.item_id

    @property
    def example_id(self) -> int:
        return self.order


# ---------------------------------------------------------------------------
# raw loaders


def _read_bytes(source: ByteSource) -> tuple[bytes, str]:
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        if not os.path.exists(path):
            raise FileNotFoundError(f"dataset file not found: {path}")
        opener = gzip.open if path.endswith(".gz") else open
        with opener(path, "rb") as fh:
            return fh.read(), path
    return source.read(), getattr(source, "name", "<stream>")


def _iter_lines(data: bytes) -> Iterator[tuple[int, int, bytes]]:
    """Yield (1-based line number, byte offset, line) without line terminators."""
    offset = 0
    for lineno, raw in enumerate(data.splitlines(keepends=True), start=1):
        line = raw.rstrip(b"\r\n")
        if line.strip():
            yield lineno, offset, line
        offset += len(raw)


def _parse_rating(text: str) -> float:
    value = float(text)
    if not 1.0 <= value <= 5.0:
        raise ValueError(f"rating {value} outside [1, 5]")
    return value


def load_movielens(ratings_source: ByteSource, movies_source: ByteSource) -> LoadedDataset:
    """Parse MovieLens-1M ``ratings.dat`` and ``movies.dat``.

    Any malformed line raises :class:`DatasetFormatError` naming the line, so a
    corrupt file can never silently shrink the dataset.
    """
    movies_data, movies_name = _read_bytes(movies_source)
    catalog: dict[str, ItemMeta] = {}
    for lineno, _, line in _iter_lines(movies_data):
        parts = line.decode("latin-1").split("::")
        if len(parts) < 3:
            raise DatasetFormatError(movies_name, f"line {lineno}", "expected MovieID::Title::Genres")
        item_id, genres = parts[0].strip(), parts[-1]
        title = "::".join(parts[1:-1])
        if not item_id:
            raise DatasetFormatError(movies_name, f"line {lineno}", "empty MovieID")
        attributes = tuple(g for g in genres.split("|") if g)
        catalog[item_id] = ItemMeta(item_id, title, attributes, missing=not title.strip())

    ratings_data, ratings_name = _read_bytes(ratings_source)
    interactions: list[Interaction] = []
    for lineno, _, line in _iter_lines(ratings_data):
        parts = line.decode("latin-1").split("::")
        if len(parts) != 4:
            raise DatasetFormatError(ratings_name, f"line {lineno}",
                                     "expected UserID::MovieID::Rating::Timestamp")
        try:
            rating = _parse_rating(parts[2])
            timestamp = int(parts[3])
        except ValueError as exc:
            raise DatasetFormatError(ratings_name, f"line {lineno}", str(exc)) from None
        if timestamp < 0:
            raise DatasetFormatError(ratings_name, f"line {lineno}", "negative timestamp")
        interactions.append(Interaction(parts[0], parts[1], rating, timestamp))
    return LoadedDataset(interactions, catalog, 0)


_AMAZON_REVIEW_FIELDS = ("reviewerID", "asin", "overall", "unixReviewTime")


def load_amazon_books(reviews_source: ByteSource, meta_source: ByteSource) -> LoadedDataset:
    """Parse Amazon review and metadata JSON-lines files (already 5-core).

    Invalid JSON raises with its byte offset. Records missing a required field
    are skipped and counted in ``n_skipped``.
    """
    skipped = 0
    meta_data, meta_name = _read_bytes(meta_source)
    catalog: dict[str, ItemMeta] = {}
    for _, offset, line in _iter_lines(meta_data):
        record = _decode_json(line, meta_name, offset)
        asin = record.get("asin")
        if not asin:
            skipped += 1
            continue
        title = record.get("title")
        title = title.strip() if isinstance(title, str) else ""
        brand = record.get("brand")
        attributes = (brand.strip(),) if isinstance(brand, str) and brand.strip() else ()
        catalog[asin] = ItemMeta(asin, title, attributes, missing=not title)

    reviews_data, reviews_name = _read_bytes(reviews_source)
    interactions: list[Interaction] = []
    for _, offset, line in _iter_lines(reviews_data):
        record = _decode_json(line, reviews_name, offset)
        if any(record.get(k) is None for k in _AMAZON_REVIEW_FIELDS):
            skipped += 1
            continue
        try:
            rating = _parse_rating(record["overall"])
            timestamp = int(record["unixReviewTime"])
        except (TypeError, ValueError) as exc:
            raise DatasetFormatError(reviews_name, f"byte {offset}", str(exc)) from None
        interactions.append(Interaction(str(record["reviewerID"]), str(record["asin"]), rating, timestamp))
    return LoadedDataset(interactions, catalog, skipped)


def _decode_json(line: bytes, source: str, offset: int) -> dict:
    try:
        record = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(source, f"byte {offset}", f"invalid JSON ({exc})") from None
    if not isinstance(record, dict):
        raise DatasetFormatError(source, f"byte {offset}", "expected a JSON object")
    return record


# ---------------------------------------------------------------------------
# pipeline


def filter_missing_metadata(interactions: Iterable[Interaction],
                            catalog: dict[str, ItemMeta]) -> list[Interaction]:
    """Drop interactions on items that are uncatalogued or flagged missing."""
    keep = {item_id for item_id, meta in catalog.items() if not meta.missing}
    return [x for x in interactions if x.item_id in keep]


def subsample_users(interactions: Sequence[Interaction], n_users: int, seed: int = 0) -> list[Interaction]:
    """Keep every interaction of ``n_users`` users drawn uniformly without replacement.

    Whole user timelines survive, so the global chronological split and the
    history windows behave exactly as on the full data.
    """
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    users = sorted({x.user_id for x in interactions})
    if n_users >= len(users):
        return list(interactions)
    keep = {users[i] for i in np.random.default_rng(seed).choice(len(users), size=n_users, replace=False)}
    return [x for x in interactions if x.user_id in keep]


def chronological_split(interactions: Iterable[Interaction], train_fraction: float = 0.9) -> ChronSplit:
    """Globally sort by ``(timestamp, user_id, item_id)`` and cut at ``floor(fraction * N)``."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    ordered = sorted(interactions, key=Interaction.sort_key)
    # repr() round-trips the float exactly as typed, so 0.29 * 100 floors to 29, not 28
    n_train = math.floor(Fraction(repr(float(train_fraction))) * len(ordered))
    train, test = tuple(ordered[:n_train]), tuple(ordered[n_train:])
    if test:
        boundary = test[0].timestamp
    elif train:
        boundary = train[-1].timestamp
    else:
        boundary = 0
    return ChronSplit(train, test, boundary, float(train_fraction))


def build_examples(
    split: ChronSplit,
    catalog: dict[str, ItemMeta],
    max_history: int = DEFAULT_MAX_HISTORY,
    source: Literal["train", "test"] = "train",
    test_history: Literal["full", "train_only"] = "full",
) -> list[RatingExample]:
    """Attach to every candidate interaction the user's most recent prior ratings.

    Histories are drawn from interactions strictly earlier in the global order,
    oldest first. Test candidates see the whole train split and, unless
    ``test_history="train_only"``, earlier test interactions of the same user.
    """
    if source not in ("train", "test"):
        raise ValueError(f"source must be 'train' or 'test', got {source!r}")
    if test_history not in ("full", "train_only"):
        raise ValueError(f"unknown test_history mode {test_history!r}")
    if max_history < 0:
        raise ValueError("max_history must be non-negative")

    recent: dict[str, deque] = defaultdict(lambda: deque(maxlen=max_history))
    examples: list[RatingExample] = []

    def entry(x: Interaction, order: int) -> HistoryEntry:
        return HistoryEntry(catalog[x.item_id], x.rating, x.timestamp, order)

    if source == "train":
        for order, x in enumerate(split.train):
            window = recent[x.user_id]
            examples.append(RatingExample(x.user_id, catalog[x.item_id], x.rating, x.timestamp,
                                          tuple(window), order))
            if max_history:
                window.append(entry(x, order))
        return examples

    if max_history:
        for order, x in enumerate(split.train):
            recent[x.user_id].append(entry(x, order))
    offset = len(split.train)
    for i, x in enumerate(split.test):
        window = recent[x.user_id]
        examples.append(RatingExample(x.user_id, catalog[x.item_id], x.rating, x.timestamp,
                                      tuple(window), offset + i))
        if max_history and test_history == "full":
            window.append(entry(x, offset + i))
    return examples


def sample_test(examples: Sequence[RatingExample], n: int = 2000, seed: int = 0) -> list[RatingExample]:
    """Uniform sample without replacement, returned in chronological order."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n >= len(examples):
        return list(examples)
    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(len(examples), size=n, replace=False))
    return [examples[i] for i in picked]


# ---------------------------------------------------------------------------
# canonical files


def write_jsonl(path: str | os.PathLike, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_jsonl(path: str | os.PathLike) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def write_interactions(path, interactions: Iterable[Interaction]) -> None:
    write_jsonl(path, (x.to_json() for x in interactions))


def read_interactions(path) -> list[Interaction]:
    return [Interaction.from_json(r) for r in read_jsonl(path)]


def write_catalog(path, catalog: dict[str, ItemMeta]) -> None:
    write_jsonl(path, (catalog[k].to_json() for k in sorted(catalog)))


def read_catalog(path) -> dict[str, ItemMeta]:
    return {m.item_id: m for m in (ItemMeta.from_json(r) for r in read_jsonl(path))}


def content_hash(interactions: Iterable[Interaction]) -> str:
    """SHA-256 over the canonical JSON encoding, order-sensitive."""
    h = hashlib.sha256()
    for x in interactions:
        h.update(json.dumps(x.to_json(), sort_keys=True).encode())
        h.update(b"\n")
    return h.hexdigest()


def split_hash(split: ChronSplit) -> str:
    h = hashlib.sha256()
    h.update(content_hash(split.train).encode())
    h.update(content_hash(split.test).encode())
    return h.hexdigest()


def dataset_stats(interactions: Sequence[Interaction], split: ChronSplit | None = None) -> dict:
    stats = {
        "n_interactions": len(interactions),
        "n_users": len({x.user_id for x in interactions}),
        "n_items": len({x.item_id for x in interactions}),
    }
    if split is not None:
        stats.update(n_train=len(split.train), n_test=len(split.test),
                     boundary_timestamp=split.boundary_timestamp)
    return stats


def as_byte_stream(text: str, encoding: str = "utf-8") -> IO[bytes]:
    """Small helper for tests and scripts that build raw files in memory."""
    return io.BytesIO(text.encode(encoding))


__all__ = [
    "ChronSplit", "DatasetFormatError", "HistoryEntry", "Interaction", "ItemMeta",
    "LoadedDataset", "RatingExample", "as_byte_stream", "build_examples", "subsample_users",
    "chronological_split", "content_hash", "dataset_stats", "filter_missing_metadata",
    "load_amazon_books", "load_movielens", "read_catalog", "read_interactions",
    "sample_test", "split_hash", "write_catalog", "write_interactions",
]
