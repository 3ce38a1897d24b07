"""Experiment runner: preparation, runs, random search and data-efficiency curves."""

from .config import (ConfigError, CurveConfig, DataConfig, EvalConfig, ExperimentConfig, LLMConfig, SearchConfig,
                     apply_overrides, load_config, validate_fractions)
from .curve import CurveResult, FractionPoint, run_curve
from .pipeline import Prepared, format_stats, load_prepared, prepare, validation_split
from .runner import RunOutcome, build_client, fit_and_score, run_experiment
from .search import DEFAULT_SPACES, SearchResult, SearchSpace, Trial, run_search

__all__ = [
    "ConfigError", "CurveConfig", "DataConfig", "EvalConfig", "ExperimentConfig", "LLMConfig",
    "SearchConfig", "apply_overrides", "load_config", "validate_fractions", "CurveResult",
    "FractionPoint", "run_curve", "Prepared", "format_stats", "load_prepared", "prepare",
    "validation_split", "RunOutcome", "build_client", "fit_and_score", "run_experiment",
    "DEFAULT_SPACES", "SearchResult", "SearchSpace", "Trial", "run_search",
]
