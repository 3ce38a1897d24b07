"""Dataset preparation and loading of prepared datasets."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import dataset as ds
from ..dataset import ChronSplit, ItemMeta, RatingExample
from ..features import EncodedData, ItemTable, Vocabs, build_vocabs, encode_dataset
from .config import ConfigError, ExperimentConfig

log = logging.getLogger(__name__)

INTERACTIONS = "interactions.jsonl"
CATALOG = "catalog.jsonl"
MANIFEST = "split.json"
STATS = "stats.json"


def load_raw(kind: str, primary, meta) -> ds.LoadedDataset:
    if kind == "movielens":
        return ds.load_movielens(primary, meta)
    if kind == "amazon":
        return ds.load_amazon_books(primary, meta)
    raise ConfigError(f"unknown dataset kind {kind!r}")


def prepare(kind: str, primary, meta, out_dir, train_fraction: float = 0.9, title_min_count: int = 2,
            subsample_users: int | None = None, subsample_seed: int = 0) -> dict:
    """Parse raw files and write the canonical prepared dataset to ``out_dir``.

    Output: interactions and the used part of the catalog as JSON lines, the
    split manifest with content hashes, the four vocabularies and a stats file.
    Returns the stats mapping.
    """
    loaded = load_raw(kind, primary, meta)
    interactions = ds.filter_missing_metadata(loaded.interactions, loaded.catalog)
    n_filtered = len(loaded.interactions) - len(interactions)
    if subsample_users is not None:
        interactions = ds.subsample_users(interactions, subsample_users, subsample_seed)
    if not interactions:
        raise ValueError("no interactions left after filtering")
    interactions.sort(key=ds.Interaction.sort_key)
    split = ds.chronological_split(interactions, train_fraction)
    used = {x.item_id for x in interactions}
    catalog = {k: v for k, v in loaded.catalog.items() if k in used}
    vocabs = build_vocabs(split.train, catalog, min_count=title_min_count)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds.write_interactions(out / INTERACTIONS, interactions)
    ds.write_catalog(out / CATALOG, catalog)
    vocabs.save(out)
    manifest = {
        "kind": kind,
        "train_fraction": train_fraction,
        "title_min_count": title_min_count,
        "subsample_users": subsample_users,
        "subsample_seed": subsample_seed,
        "n_train": len(split.train),
        "n_test": len(split.test),
        "boundary_timestamp": split.boundary_timestamp,
        "interactions_hash": ds.content_hash(interactions),
        "split_hash": ds.split_hash(split),
        "sources": [os.fspath(p) if isinstance(p, (str, os.PathLike)) else "<stream>" for p in (primary, meta)],
    }
    _write_json(out / MANIFEST, manifest)
    stats = {"kind": kind, **ds.dataset_stats(interactions, split),
             "n_train_users": len({x.user_id for x in split.train}),
             "n_train_items": len({x.item_id for x in split.train}),
             "n_skipped_records": loaded.n_skipped, "n_filtered_missing_metadata": n_filtered,
             "vocab_sizes": {name: v.size for name, v in zip(Vocabs._fields, vocabs)}}
    _write_json(out / STATS, stats)
    return stats


def format_stats(stats: dict, test_sample: int = 2000) -> str:
    header = f"{'dataset':<12} {'#users':>10} {'#items':>10} {'#train':>12} {'#test':>22}"
    test = f"{min(test_sample, stats['n_test']):,} ({stats['n_test']:,})"
    row = (f"{stats['kind']:<12} {stats['n_users']:>10,} {stats['n_items']:>10,} "
           f"{stats['n_train']:>12,} {test:>22}")
    return header + "\n" + row


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class Prepared:
    manifest: dict
    catalog: dict[str, ItemMeta]
    split: ChronSplit
    vocabs: Vocabs
    table: ItemTable
    train_examples: list[RatingExample]
    test_examples: list[RatingExample]  # the full test split
    test_sample: list[RatingExample]

    @property
    def label_mean(self) -> float:
        return float(np.mean([x.rating for x in self.split.train]))

    def encode(self, examples, max_history: int) -> EncodedData:
        return encode_dataset(examples, self.vocabs, self.table, max_history)


def load_prepared(config: ExperimentConfig) -> Prepared:
    d = config.data
    root = Path(d.prepared_dir)
    for name in (INTERACTIONS, CATALOG, MANIFEST):
        if not (root / name).exists():
            raise FileNotFoundError(f"prepared dataset file not found: {root / name} (run `prepare` first)")
    manifest = json.loads((root / MANIFEST).read_text())
    if manifest["train_fraction"] != d.train_fraction:
        raise ConfigError(f"{root} was prepared with train_fraction={manifest['train_fraction']}, "
                          f"config asks for {d.train_fraction}")
    interactions = ds.read_interactions(root / INTERACTIONS)
    split = ds.chronological_split(interactions, d.train_fraction)
    if ds.split_hash(split) != manifest["split_hash"]:
        raise ValueError(f"split hash mismatch in {root}; the prepared files were modified")
    catalog = ds.read_catalog(root / CATALOG)
    vocabs = Vocabs.load(root)
    table = ItemTable.build(catalog, vocabs)
    train_examples = ds.build_examples(split, catalog, d.max_history, "train")
    test_examples = ds.build_examples(split, catalog, d.max_history, "test", d.test_history)
    sample = ds.sample_test(test_examples, config.eval.test_sample, config.eval.sample_seed)
    log.info("loaded %s: %d train, %d test (%d sampled)", root, len(train_examples), len(test_examples), len(sample))
    return Prepared(manifest, catalog, split, vocabs, table, train_examples, test_examples, sample)


def validation_split(train_examples: list[RatingExample], fraction: float = 0.05):
    """Chronological tail of the training examples, for model selection."""
    n_val = max(1, int(round(fraction * len(train_examples))))
    if n_val >= len(train_examples):
        raise ValueError("training split too small to hold out a validation tail")
    return train_examples[:-n_val], train_examples[-n_val:]
