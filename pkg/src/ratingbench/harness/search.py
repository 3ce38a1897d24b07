"""Seeded random hyperparameter search, ranked on a held-out validation tail."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from .. import models as M
from .config import ConfigError, ExperimentConfig
from .pipeline import Prepared, load_prepared, validation_split
from .runner import fit_and_score

log = logging.getLogger(__name__)

_MODEL_FIELDS = {f.name for f in fields(M.ModelConfig)}
_TRAIN_FIELDS = {f.name for f in fields(M.TrainConfig)}

# each entry: {"choice": [...]}, {"uniform": [lo, hi]}, {"loguniform": [lo, hi]} or {"int": [lo, hi]}
DEFAULT_SPACES = {
    "mf": {"embed_dim": {"choice": [8, 16, 32, 64]}, "lr": {"loguniform": [3e-4, 1e-2]},
           "l2": {"loguniform": [1e-3, 1e-1]}},
    "mlp": {"embed_dim": {"choice": [8, 16, 32, 64]}, "hidden": {"choice": [[64], [64, 32], [128, 64]]},
            "lr": {"loguniform": [3e-4, 1e-2]}, "l2": {"loguniform": [1e-4, 1e-1]},
            "dropout": {"uniform": [0.0, 0.3]}},
    "tfmlp": {"embed_dim": {"choice": [16, 32, 64]}, "hidden": {"choice": [[64, 32], [128, 64], [256, 128]]},
              "layers": {"int": [1, 2]}, "heads": {"choice": [1, 2, 4]},
              "aggregation": {"choice": ["add", "concat"]}, "lr": {"loguniform": [3e-4, 3e-3]},
              "dropout": {"uniform": [0.0, 0.3]}, "l2": {"loguniform": [1e-4, 1e-1]}},
}


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str
    values: tuple

    def sample(self, rng: np.random.Generator):
        if self.kind == "choice":
            v = self.values[int(rng.integers(len(self.values)))]
            return list(v) if isinstance(v, (list, tuple)) else v
        lo, hi = self.values
        if self.kind == "uniform":
            return float(rng.uniform(lo, hi))
        if self.kind == "loguniform":
            return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
        return int(rng.integers(lo, hi + 1))


class SearchSpace:
    """Independent dimensions over model and training hyperparameters.

    Names may be qualified (``model.lr`` / ``train.lr``); bare names go to
    the training config when they are training fields, else to the model.
    """

    MAX_REJECTIONS = 1000

    def __init__(self, dims: list[Dimension]):
        if not dims:
            raise ConfigError("search space must not be empty")
        self.dims = dims

    @classmethod
    def from_dict(cls, spec: dict) -> "SearchSpace":
        dims = []
        for name, entry in sorted(spec.items()):
            if not isinstance(entry, dict) or len(entry) != 1:
                raise ConfigError(f"search dimension {name!r} needs exactly one of choice/uniform/loguniform/int")
            ((kind, values),) = entry.items()
            if kind not in ("choice", "uniform", "loguniform", "int"):
                raise ConfigError(f"unknown search dimension type {kind!r} for {name!r}")
            values = tuple(tuple(v) if isinstance(v, list) else v for v in values)
            if kind == "choice" and not values:
                raise ConfigError(f"choice for {name!r} is empty")
            if kind != "choice" and (len(values) != 2 or values[0] > values[1]):
                raise ConfigError(f"{kind} for {name!r} needs [low, high] with low <= high")
            if kind == "loguniform" and values[0] <= 0:
                raise ConfigError(f"loguniform for {name!r} needs a positive lower bound")
            dims.append(Dimension(cls._qualify(name), kind, values))
        return cls(dims)

    @classmethod
    def for_kind(cls, kind: str, overrides: dict | None = None) -> "SearchSpace":
        return cls.from_dict(overrides or DEFAULT_SPACES[kind])

    @staticmethod
    def _qualify(name: str) -> str:
        if "." in name:
            section, key = name.split(".", 1)
            valid = _MODEL_FIELDS if section == "model" else _TRAIN_FIELDS if section == "train" else set()
            if key not in valid:
                raise ConfigError(f"unknown search dimension {name!r}")
            return name
        if name in _TRAIN_FIELDS:
            return f"train.{name}"
        if name in _MODEL_FIELDS:
            return f"model.{name}"
        raise ConfigError(f"unknown search dimension {name!r}")

    def sample(self, rng: np.random.Generator, base: ExperimentConfig) -> tuple[dict, ExperimentConfig]:
        """Draw points until one yields a buildable config for ``base.model.kind``."""
        for _ in range(self.MAX_REJECTIONS):
            params = {d.name: d.sample(rng) for d in self.dims}
            try:
                config = apply_params(base, params)
            except (ConfigError, ValueError):
                continue
            if _buildable(config.model):
                return params, config
        raise ConfigError("search space produced no valid configuration")


def _buildable(m: M.ModelConfig) -> bool:
    if m.kind != "tfmlp":
        return True
    width = m.embed_dim if m.aggregation == "add" else 4 * m.embed_dim
    return width % m.heads == 0


def apply_params(base: ExperimentConfig, params: dict) -> ExperimentConfig:
    raw = base.to_dict()
    for name, value in params.items():
        section, key = name.split(".", 1)
        raw[section][key] = copy.deepcopy(value)
    return ExperimentConfig.from_dict(raw)


@dataclass
class Trial:
    index: int
    params: dict
    val_rmse: float
    val_mae: float
    val_auc: float | None
    steps: int
    status: str

    def row(self) -> dict:
        return {"trial": self.index, "status": self.status, "val_rmse": self.val_rmse, "val_mae": self.val_mae,
                "val_auc": self.val_auc, "steps": self.steps, "params": json.dumps(self.params, sort_keys=True)}


@dataclass
class SearchResult:
    trials: list[Trial]
    best_index: int
    best_config: ExperimentConfig

    @property
    def best(self) -> Trial:
        return self.trials[self.best_index]

    def ranked(self) -> list[Trial]:
        return sorted(self.trials, key=lambda t: (t.val_rmse, t.index))

    def write(self, out_dir: Path) -> dict:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "trials.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(self.trials[0].row()))
            writer.writeheader()
            for t in self.trials:
                writer.writerow(t.row())
        best = self.best_config.to_dict()
        (out_dir / "best_config.yaml").write_text(yaml.safe_dump(best, sort_keys=True))
        summary = {"best_trial": self.best.row(), "n_trials": len(self.trials), "best_config": best}
        (out_dir / "search.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return {"trials": str(out_dir / "trials.csv"), "best_config": str(out_dir / "best_config.yaml")}


def budgeted(config: ExperimentConfig) -> ExperimentConfig:
    """Replace the training length by the search budget."""
    s = config.search
    if s.budget_steps is None and s.budget_epochs is None:
        return config
    raw = config.to_dict()
    raw["train"]["steps"] = s.budget_steps or raw["train"]["steps"]
    raw["train"]["epochs"] = None if s.budget_steps is not None else s.budget_epochs
    raw["train"]["eval_every"] = 0
    return ExperimentConfig.from_dict(raw)


def run_search(config: ExperimentConfig, prepared: Prepared | None = None, n_trials: int | None = None,
               seed: int | None = None, space: SearchSpace | None = None) -> SearchResult:
    """Uniform random search; each trial fits on the first 95% of train and scores on the last 5%."""
    prepared = prepared or load_prepared(config)
    n_trials = n_trials if n_trials is not None else config.search.n_trials
    seed = config.search.seed if seed is None else seed
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    space = space or SearchSpace.for_kind(config.model.kind, config.search.space or None)
    fit, val = validation_split(prepared.train_examples, config.eval.validation_fraction)
    rng = np.random.default_rng(seed)
    trials = []
    sampled = []
    for i in range(n_trials):
        params, trial_config = space.sample(rng, config)
        sampled.append(trial_config)
        try:
            report, result = fit_and_score(budgeted(trial_config), prepared, fit, val)
            trial = Trial(i, params, report.rmse, report.mae, report.auc, result.steps, "complete")
        except M.TrainingDivergence as exc:
            trial = Trial(i, params, math.inf, math.inf, None, exc.step, "diverged")
        log.info("trial %d: %s val_rmse=%.4f", i, params, trial.val_rmse)
        trials.append(trial)
    best = min(range(n_trials), key=lambda k: (trials[k].val_rmse, k))
    return SearchResult(trials, best, sampled[best])
