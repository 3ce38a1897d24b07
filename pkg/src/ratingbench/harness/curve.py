"""Data-efficiency curves: one model per training-data fraction."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

from .. import metrics
from .. import models as M
from .config import ExperimentConfig, validate_fractions
from .pipeline import Prepared, load_prepared
from .runner import fit_and_score


@dataclass(frozen=True)
class FractionPoint:
    fraction: float
    n_train: int
    steps: int
    rmse: float
    mae: float
    auc: float | None


@dataclass
class CurveResult:
    points: list[FractionPoint]
    step_curves: dict[float, M.TrainCurve]

    def write(self, out_dir: Path) -> dict:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "fraction_curve.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(FractionPoint.__dataclass_fields__))
            writer.writeheader()
            writer.writerows(asdict(p) for p in self.points)
        files = {"fraction_curve": str(path)}
        for fraction, curve in self.step_curves.items():
            step_path = out_dir / f"step_curve_{fraction:g}.csv"
            curve.write_csv(step_path)
            files[f"step_curve_{fraction:g}"] = str(step_path)
        return files


def run_curve(config: ExperimentConfig, fractions=None, prepared: Prepared | None = None) -> CurveResult:
    """Train on the chronologically earliest ``fraction`` of train for each fraction; score on the test sample.

    The training config is reused as is, so with ``train.epochs`` set the
    number of steps scales with the data consumed. Heuristic predictors are
    refit on each prefix, which gives the flat reference curve.
    """
    fractions = validate_fractions(config.curve.fractions if fractions is None else fractions)
    prepared = prepared or load_prepared(config)
    points, curves = [], {}
    sample = prepared.test_sample
    for fraction in fractions:
        n_train = max(1, round(fraction * len(prepared.train_examples)))
        if config.predictor == "heuristic":
            stats = M.fit_heuristics(prepared.train_examples[:n_train])
            report = metrics.evaluate(M.predict_examples(stats, config.heuristic, sample),
                                      [ex.label for ex in sample])
            points.append(FractionPoint(fraction, n_train, 0, report.rmse, report.mae, report.auc))
            continue
        raw = config.to_dict()
        raw["train"]["data_fraction"] = fraction
        cfg = ExperimentConfig.from_dict(raw)
        report, result = fit_and_score(cfg, prepared, prepared.train_examples, sample, sample)
        points.append(FractionPoint(fraction, n_train, result.steps, report.rmse, report.mae, report.auc))
        curves[fraction] = result.curve
    return CurveResult(points, curves)
