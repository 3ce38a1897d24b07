"""Experiment configuration: nested dataclasses loaded from YAML or JSON.

A config file mirrors :class:`ExperimentConfig`::

    name: ml1m-tfmlp
    data: {kind: movielens, prepared_dir: prepared/ml-1m}
    predictor: model
    model: {kind: tfmlp, embed_dim: 32}
    train: {lr: 0.001, epochs: 2}

Unknown keys are rejected. ``--set section.key=value`` overrides are applied
to the raw mapping before construction, with values parsed as YAML scalars.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from ..models import HEURISTIC_KINDS, MODEL_KINDS, ModelConfig, TrainConfig
from ..llm import FALLBACKS, SHOT_STRATEGIES

DATASET_KINDS = ("movielens", "amazon")
PREDICTORS = ("heuristic", "model", "llm")
LLM_CLIENTS = ("mock", "openai")
MOCK_KINDS = ("constant", "history_mean")


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    kind: str = "movielens"
    prepared_dir: str = "prepared/ml-1m"
    train_fraction: float = 0.9
    max_history: int = 10
    test_history: str = "full"  # or train_only
    title_min_count: int = 2
    subsample_users: int | None = None  # prepare-time only
    subsample_seed: int = 0


@dataclass
class EvalConfig:
    test_sample: int = 2000
    sample_seed: int = 0
    validation_fraction: float = 0.05  # tail of train held out by search


@dataclass
class LLMConfig:
    client: str = "mock"
    mock: str = "constant"
    mock_response: str = "3"
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    token_env: str = "OPENAI_API_KEY"
    api: str = "chat"
    temperature: float = 0.1
    max_tokens: int = 8
    timeout: float = 30.0
    max_retries: int = 3
    backoff: float = 0.5
    shots: int = 0
    shot_strategy: str = "user_recent"
    fallback: str = "global_mean"
    concurrency: int = 4
    item_noun: str = "movie"


@dataclass
class SearchConfig:
    n_trials: int = 30
    seed: int = 0
    budget_steps: int | None = None
    budget_epochs: float | None = 1.0
    space: dict = field(default_factory=dict)  # see harness.search.SearchSpace


@dataclass
class CurveConfig:
    fractions: list = field(default_factory=lambda: [0.01, 0.05, 0.2, 1.0])


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    output_dir: str = "runs"
    predictor: str = "model"
    heuristic: str = "item"
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    llm: LLMConfig = field(default_factory=LLMConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    curve: CurveConfig = field(default_factory=CurveConfig)

    SECTIONS = {"data": DataConfig, "eval": EvalConfig, "model": ModelConfig, "train": TrainConfig,
                "llm": LLMConfig, "search": SearchConfig, "curve": CurveConfig}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw or {})
        top = {f.name for f in fields(cls)}
        unknown = set(raw) - top
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in raw.items():
            section = cls.SECTIONS.get(key)
            if section is None:
                kwargs[key] = value
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a mapping")
            known = {f.name for f in fields(section)}
            bad = set(value) - known
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
            try:
                kwargs[key] = section(**value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid {key!r} section: {exc}") from None
        config = cls(**kwargs)
        config.validate()
        return config

    def validate(self) -> None:
        """Checks that need more than one field; run before any work starts."""
        d, e, llm = self.data, self.eval, self.llm
        checks = [
            (self.predictor in PREDICTORS, f"predictor must be one of {PREDICTORS}"),
            (self.heuristic in HEURISTIC_KINDS, f"heuristic must be one of {HEURISTIC_KINDS}"),
            (self.model.kind in MODEL_KINDS, f"model.kind must be one of {MODEL_KINDS}"),
            (not (self.model.kind == "mf" and self.model.head != "regression"),
             "matrix factorization supports only the regression head"),
            (d.kind in DATASET_KINDS, f"data.kind must be one of {DATASET_KINDS}"),
            (0.0 < d.train_fraction < 1.0, "data.train_fraction must lie in (0, 1)"),
            (d.max_history >= 0, "data.max_history must be >= 0"),
            (d.test_history in ("full", "train_only"), "data.test_history must be full or train_only"),
            (d.title_min_count >= 1, "data.title_min_count must be >= 1"),
            (d.subsample_users is None or d.subsample_users >= 1, "data.subsample_users must be >= 1"),
            (e.test_sample >= 1, "eval.test_sample must be >= 1"),
            (0.0 < e.validation_fraction < 1.0, "eval.validation_fraction must lie in (0, 1)"),
            (llm.client in LLM_CLIENTS, f"llm.client must be one of {LLM_CLIENTS}"),
            (llm.mock in MOCK_KINDS, f"llm.mock must be one of {MOCK_KINDS}"),
            (llm.api in ("chat", "completions"), "llm.api must be chat or completions"),
            (llm.temperature >= 0, "llm.temperature must be >= 0"),
            (llm.shots >= 0, "llm.shots must be >= 0"),
            (llm.shot_strategy in SHOT_STRATEGIES, f"llm.shot_strategy must be one of {SHOT_STRATEGIES}"),
            (llm.fallback in FALLBACKS, f"llm.fallback must be one of {FALLBACKS}"),
            (llm.concurrency >= 1, "llm.concurrency must be >= 1"),
            (self.search.n_trials >= 1, "search.n_trials must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        validate_fractions(self.curve.fractions)


def validate_fractions(fractions) -> list[float]:
    values = [float(f) for f in fractions]
    if not values:
        raise ConfigError("at least one fraction is required")
    if any(not 0.0 < f <= 1.0 for f in values):
        raise ConfigError(f"fractions must lie in (0, 1], got {values}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"fractions must be strictly ascending, got {values}")
    return values


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    out = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, text = item.split("=", 1)
        keys = dotted.strip().split(".")
        node = out
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {dotted!r} descends into a non-mapping")
        node[keys[-1]] = yaml.safe_load(text)
    return out


def read_raw(path: str | os.PathLike) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return json.loads(text)
    return yaml.safe_load(text) or {}


def load_config(path: str | os.PathLike | None = None, overrides: list[str] = ()) -> ExperimentConfig:
    raw = read_raw(path) if path is not None else {}
    return ExperimentConfig.from_dict(apply_overrides(raw, list(overrides)))
