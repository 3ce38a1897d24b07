"""Multi-run procedures shared by the benchmark scripts and the acceptance suite."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

from .. import metrics
from .. import models as M
from .config import ExperimentConfig
from .pipeline import MANIFEST, Prepared, load_prepared, prepare
from .runner import fit_and_score
from .search import SearchResult, run_search

log = logging.getLogger(__name__)


def prepare_cached(kind: str, primary, meta, out_dir, **kwargs) -> dict:
    """Run :func:`prepare` unless ``out_dir`` already holds a matching manifest."""
    manifest_path = Path(out_dir) / MANIFEST
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        wanted = {k: v for k, v in kwargs.items() if k in manifest}
        if all(manifest[k] == v for k, v in wanted.items()) and manifest["sources"] == [
                os.fspath(primary), os.fspath(meta)]:
            return json.loads((Path(out_dir) / "stats.json").read_text())
    return prepare(kind, primary, meta, out_dir, **kwargs)


def heuristic_table(prepared: Prepared) -> dict[str, metrics.MetricsReport]:
    stats = M.fit_heuristics(prepared.split.train)
    labels = [ex.label for ex in prepared.test_sample]
    return {kind: metrics.evaluate(M.predict_examples(stats, kind, prepared.test_sample), labels)
            for kind in M.HEURISTIC_KINDS}


@dataclass
class TunedRun:
    search: SearchResult
    config: ExperimentConfig
    test: metrics.MetricsReport


def search_then_test(config: ExperimentConfig, prepared: Prepared | None = None,
                     n_trials: int | None = None) -> TunedRun:
    """Select on the validation tail, then retrain the winner on all of train and score the test sample."""
    prepared = prepared or load_prepared(config)
    result = run_search(config, prepared, n_trials=n_trials)
    best = result.best_config
    report, _ = fit_and_score(best, prepared, prepared.train_examples, prepared.test_sample)
    return TunedRun(result, best, report)


def with_head(config: ExperimentConfig, head: str) -> ExperimentConfig:
    raw = config.to_dict()
    raw["model"]["head"] = head
    return ExperimentConfig.from_dict(raw)


def head_ablation(config: ExperimentConfig, prepared: Prepared | None = None) -> dict[str, metrics.MetricsReport]:
    """Same backbone, seeds and budget; only the output head and its loss differ."""
    prepared = prepared or load_prepared(config)
    return {head: fit_and_score(with_head(config, head), prepared, prepared.train_examples,
                                prepared.test_sample)[0]
            for head in (M.REGRESSION, M.CLASSIFICATION)}
