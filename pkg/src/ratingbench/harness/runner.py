"""Train and evaluate one configured predictor, then write its reports."""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import llm, metrics
from .. import models as M
from .config import ExperimentConfig
from .pipeline import Prepared, load_prepared

log = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    report: metrics.MetricsReport | None
    status: str  # complete | diverged | llm_error
    curve: M.TrainCurve | None = None
    model: M.RatingModel | None = None
    files: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def complete(self) -> bool:
        return self.status == "complete"


def build_client(cfg) -> llm.CompletionClient:
    if cfg.client == "mock":
        if cfg.mock == "history_mean":
            return llm.MockClient.history_mean()
        return llm.MockClient.constant(cfg.mock_response)
    return llm.OpenAICompatibleClient(cfg.base_url, cfg.model, token_env=cfg.token_env, api=cfg.api,
                                      temperature=cfg.temperature, max_tokens=cfg.max_tokens,
                                      timeout=cfg.timeout, max_retries=cfg.max_retries, backoff=cfg.backoff)


def fit_and_score(config: ExperimentConfig, prepared: Prepared, train_examples, eval_examples,
                  curve_examples=None) -> tuple[metrics.MetricsReport, M.TrainResult]:
    """Train a supervised model on ``train_examples`` and score it on ``eval_examples``."""
    h = config.data.max_history
    train_data = prepared.encode(train_examples, h)
    eval_data = prepared.encode(eval_examples, h)
    curve_data = prepared.encode(curve_examples, h) if curve_examples is not None else None
    sizes = M.VocabSizes.from_vocabs(prepared.vocabs, h)
    label_mean = float(train_data.label[: max(1, round(config.train.data_fraction * len(train_data)))].mean())
    model = M.build_model(config.model, sizes, label_mean)
    result = M.train(model, train_data, config.train, curve_data)
    preds = model.predict(eval_data)
    return metrics.evaluate(preds, eval_data.label), result


def _predict(config: ExperimentConfig, prepared: Prepared, out: Path, outcome: RunOutcome) -> None:
    sample = prepared.test_sample
    labels = [ex.label for ex in sample]
    if config.predictor == "heuristic":
        stats = M.fit_heuristics(prepared.split.train)
        outcome.report = metrics.evaluate(M.predict_examples(stats, config.heuristic, sample), labels)
    elif config.predictor == "model":
        outcome.report, result = fit_and_score(config, prepared, prepared.train_examples, sample, sample)
        outcome.curve, outcome.model = result.curve, result.model
        outcome.report.extra["steps"] = result.steps
        result.model.save(out / "model.ckpt")
        outcome.files["checkpoint"] = str(out / "model.ckpt")
    else:
        cfg = config.llm
        shots = llm.ShotSelector(prepared.train_examples, cfg.shots, cfg.shot_strategy) if cfg.shots else None
        transcript = out / "transcript.jsonl"
        outcome.files["transcript"] = str(transcript)
        outcome.report = llm.evaluate_llm(build_client(cfg), sample, shots, llm.PromptTemplate(item_noun=cfg.item_noun),
                                          cfg.fallback, prepared.label_mean, cfg.concurrency, transcript)


def run_experiment(config: ExperimentConfig, prepared: Prepared | None = None,
                   out_dir: str | Path | None = None) -> RunOutcome:
    config.validate()
    out = Path(out_dir) if out_dir is not None else Path(config.output_dir) / config.name
    out.mkdir(parents=True, exist_ok=True)
    prepared = prepared or load_prepared(config)
    outcome = RunOutcome(None, "complete")
    start = time.perf_counter()
    try:
        _predict(config, prepared, out, outcome)
    except M.TrainingDivergence as exc:
        outcome.status, outcome.error, outcome.curve = "diverged", str(exc), exc.curve
    except llm.LLMRunError as exc:
        outcome.status, outcome.error = "llm_error", str(exc)
    elapsed = time.perf_counter() - start
    write_reports(out, config, prepared, outcome, elapsed)
    return outcome


def write_reports(out: Path, config: ExperimentConfig, prepared: Prepared, outcome: RunOutcome,
                  elapsed: float) -> None:
    if outcome.curve is not None:
        outcome.curve.write_csv(out / "curve.csv")
        outcome.files["curve"] = str(out / "curve.csv")
    payload = {
        "name": config.name,
        "status": outcome.status,
        "error": outcome.error,
        "metrics": outcome.report.to_dict() if outcome.report else None,
        "last_curve_point": outcome.curve.to_rows()[-1] if outcome.curve and len(outcome.curve) else None,
        "config": config.to_dict(),
        "dataset": prepared.manifest,
        "n_test_sampled": len(prepared.test_sample),
        "n_test_total": len(prepared.test_examples),
        "elapsed_seconds": round(elapsed, 3),
        "environment": {"python": platform.python_version(), "numpy": np.__version__},
        "files": dict(outcome.files),
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "predictor", "status", *metrics.MetricsReport.CSV_FIELDS])
        values = [getattr(outcome.report, f) if outcome.report else "" for f in metrics.MetricsReport.CSV_FIELDS]
        writer.writerow([config.name, config.predictor, outcome.status, *["" if v is None else v for v in values]])
    outcome.files.update(report=str(out / "report.json"), report_csv=str(out / "report.csv"))
