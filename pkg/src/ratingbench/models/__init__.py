from __future__ import annotations

from .. import kernel
from .base import (CLASSIFICATION, REGRESSION, ModelConfig, RatingModel, VocabSizes,
                   head_decode, head_loss)
from .heuristics import HEURISTIC_KINDS, HeuristicStats, fit_heuristics, predict_examples, predict_heuristic
from .mf import MatrixFactorization
from .mlp import FeedForward, MLPModel
from .tfmlp import TransformerMLP
from .training import CurvePoint, TrainConfig, TrainCurve, TrainingDivergence, TrainResult, train

MODEL_KINDS = {"mf": MatrixFactorization, "mlp": MLPModel, "tfmlp": TransformerMLP}


def build_model(config: ModelConfig, sizes: VocabSizes, label_mean: float = 3.0) -> RatingModel:
    try:
        cls = MODEL_KINDS[config.kind]
    except KeyError:
        raise ValueError(f"unknown model kind {config.kind!r}; expected one of {sorted(MODEL_KINDS)}") from None
    return cls(config, sizes, label_mean)


def load_model(path) -> RatingModel:
    tensors, meta = kernel.load_checkpoint(path)
    config = ModelConfig.from_dict(meta["config"])
    model = build_model(config, VocabSizes(**meta["sizes"]), meta["label_mean"])
    model.load_state(tensors)
    return model


__all__ = [
    "CLASSIFICATION", "CurvePoint", "FeedForward", "HEURISTIC_KINDS", "HeuristicStats",
    "MLPModel", "MODEL_KINDS", "MatrixFactorization", "ModelConfig", "REGRESSION",
    "RatingModel", "TrainConfig", "TrainCurve", "TrainResult", "TrainingDivergence",
    "TransformerMLP", "VocabSizes", "build_model", "fit_heuristics", "head_decode",
    "head_loss", "load_model", "predict_examples", "predict_heuristic", "train",
]
