"""Minibatch Adam training shared by all supervised predictors."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import metrics
from ..features import EncodedData
from ..kernel import Adam, TrainingError
from .base import RatingModel

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 256
    steps: int = 1000
    epochs: float | None = None  # when set, overrides steps with ceil(epochs * N / batch)
    seed: int = 0
    eval_every: int = 0  # 0: evaluate only after the final step
    data_fraction: float = 1.0

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.steps < 1:
            raise ValueError("lr, batch_size and steps must be positive")
        if not 0.0 < self.data_fraction <= 1.0:
            raise ValueError("data_fraction must lie in (0, 1]")
        if self.epochs is not None and self.epochs <= 0:
            raise ValueError("epochs must be positive")

    def total_steps(self, n_examples: int) -> int:
        if self.epochs is None:
            return self.steps
        return max(1, math.ceil(self.epochs * n_examples / self.batch_size))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CurvePoint:
    step: int
    examples_seen: int
    train_loss: float
    eval_rmse: float | None = None
    eval_auc: float | None = None


@dataclass
class TrainCurve:
    points: list[CurvePoint] = field(default_factory=list)

    def append(self, point: CurvePoint) -> None:
        if self.points and point.step <= self.points[-1].step:
            raise ValueError("curve steps must be strictly increasing")
        self.points.append(point)

    def __len__(self) -> int:
        return len(self.points)

    def to_rows(self) -> list[dict]:
        return [asdict(p) for p in self.points]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(CurvePoint.__dataclass_fields__))
            writer.writeheader()
            writer.writerows(self.to_rows())


class TrainingDivergence(TrainingError):
    def __init__(self, message: str, curve: TrainCurve, step: int):
        super().__init__(message)
        self.curve = curve
        self.step = step


@dataclass
class TrainResult:
    model: RatingModel
    curve: TrainCurve
    steps: int


def _eval_point(model: RatingModel, data: EncodedData | None):
    if data is None or len(data) == 0:
        return None, None
    report = metrics.evaluate(model.predict(data), data.label)
    return report.rmse, report.auc


def train(model: RatingModel, data: EncodedData, config: TrainConfig,
          eval_data: EncodedData | None = None) -> TrainResult:
    """Train ``model`` in place on the earliest ``data_fraction`` of ``data``.

    Batches are drawn from a seeded per-epoch permutation, so identical
    inputs give bitwise-identical curves.
    """
    if len(data) == 0:
        raise ValueError("no training examples")
    if config.data_fraction < 1.0:
        data = data.head_fraction(config.data_fraction)
    n = len(data)
    total = config.total_steps(n)
    eval_every = config.eval_every or total
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.parameters(), lr=config.lr)
    curve = TrainCurve()
    model.train()

    order = rng.permutation(n)
    cursor, seen, loss_sum, loss_count = 0, 0, 0.0, 0
    for step in range(1, total + 1):
        if cursor + config.batch_size > n and cursor > 0:
            order, cursor = rng.permutation(n), 0
        idx = order[cursor:cursor + config.batch_size]
        cursor += len(idx)
        batch = data.subset(idx)

        optimizer.zero_grad()
        raw = model.forward(batch)
        loss, d_raw = model.loss(raw, batch.label)
        if not math.isfinite(loss):
            raise TrainingDivergence(f"non-finite loss at step {step}", curve, step)
        model.backward(d_raw)
        try:
            optimizer.step()
        except TrainingError as exc:
            raise TrainingDivergence(f"step {step}: {exc}", curve, step) from None
        seen += len(idx)
        loss_sum += loss
        loss_count += 1

        if step % eval_every == 0 or step == total:
            rmse, auc = _eval_point(model, eval_data)
            curve.append(CurvePoint(step, seen, loss_sum / loss_count, rmse, auc))
            log.debug("step %d loss %.4f eval rmse %s auc %s", step, loss_sum / loss_count, rmse, auc)
            model.train()
            loss_sum, loss_count = 0.0, 0
    model.eval()
    return TrainResult(model, curve, total)
