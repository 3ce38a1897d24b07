from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .. import kernel
from ..features import EncodedData, Vocabs

REGRESSION = "regression"
CLASSIFICATION = "classification"
HEADS = (REGRESSION, CLASSIFICATION)
AGGREGATIONS = ("add", "concat")


@dataclass
class ModelConfig:
    """Hyperparameters shared by the supervised predictors.

    ``kind`` is one of ``mf``, ``mlp`` or ``tfmlp``. Fields a kind does not
    use are ignored by it.
    """

    kind: str = "mf"
    head: str = REGRESSION
    embed_dim: int = 64
    hidden: tuple[int, ...] = (128, 64)
    layers: int = 2
    heads: int = 2
    aggregation: str = "add"
    dropout: float = 0.0
    l2: float = 0.0
    dtype: str = "float64"
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if self.embed_dim < 1 or self.layers < 0 or self.heads < 1:
            raise ValueError("embed_dim and heads must be positive, layers non-negative")
        if not 0.0 <= self.dropout < 1.0 or self.l2 < 0:
            raise ValueError("dropout must lie in [0, 1) and l2 must be >= 0")

    @property
    def output_width(self) -> int:
        return 1 if self.head == REGRESSION else 5

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def head_decode(head: str, raw: np.ndarray) -> np.ndarray:
    """Regression outputs are clamped to [1, 5]; classification takes argmax + 1."""
    raw = np.asarray(raw, dtype=np.float64)
    if head == REGRESSION:
        if raw.ndim == 2 and raw.shape[1] == 1:
            raw = raw[:, 0]
        return np.clip(raw, 1.0, 5.0)
    if head == CLASSIFICATION:
        if raw.shape[-1] != 5:
            raise ValueError("classification output must have 5 logits")
        return np.argmax(raw, axis=-1).astype(np.float64) + 1.0
    raise ValueError(f"unknown head {head!r}")


def head_loss(head: str, raw: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error for regression, 5-way cross-entropy for classification."""
    if head == REGRESSION:
        loss, grad = kernel.mse(raw[:, 0], labels.astype(raw.dtype))
        return loss, grad[:, None]
    targets = np.rint(labels).astype(np.int64) - 1
    return kernel.cross_entropy_5way(raw, targets)


@dataclass
class VocabSizes:
    users: int
    items: int
    title_tokens: int
    attributes: int
    max_history: int = 10

    @classmethod
    def from_vocabs(cls, vocabs: Vocabs, max_history: int = 10) -> "VocabSizes":
        return cls(vocabs.user.size, vocabs.item.size, vocabs.title.size, vocabs.attribute.size,
                   max_history)


class RatingModel(kernel.Module):
    """Base for predictors mapping :class:`EncodedData` rows to head outputs."""

    kind = "base"

    def __init__(self, config: ModelConfig, sizes: VocabSizes, label_mean: float = 3.0):
        self.config = config
        self.sizes = sizes
        self.label_mean = float(label_mean)
        self.dtype = np.dtype(config.dtype)
        self.rng = np.random.default_rng(config.seed)

    def _output_bias(self) -> np.ndarray:
        if self.config.head == REGRESSION:
            return np.full(1, self.label_mean, dtype=self.dtype)
        return np.zeros(5, dtype=self.dtype)

    def forward(self, batch: EncodedData) -> np.ndarray:
        raise NotImplementedError

    def backward(self, d_raw: np.ndarray) -> None:
        raise NotImplementedError

    def loss(self, raw: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
        return head_loss(self.config.head, raw, labels)

    def predict_raw(self, data: EncodedData, batch_size: int = 4096) -> np.ndarray:
        was_training = self.training
        self.eval()
        try:
            outs = [self.forward(data.subset(np.arange(s, min(s + batch_size, len(data)))))
                    for s in range(0, len(data), batch_size)]
        finally:
            self.train(was_training)
        return np.concatenate(outs) if outs else np.empty((0, self.config.output_width))

    def predict(self, data: EncodedData, batch_size: int = 4096) -> np.ndarray:
        return head_decode(self.config.head, self.predict_raw(data, batch_size))

    def save(self, path) -> None:
        meta = {"config": self.config.to_dict(), "sizes": asdict(self.sizes),
                "label_mean": self.label_mean}
        kernel.save_checkpoint(path, self.parameters(), meta)
        with open(f"{path}.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(params) != set(tensors):
            raise ValueError(f"checkpoint parameters differ: {sorted(set(params) ^ set(tensors))}")
        for name, p in params.items():
            if p.value.shape != tensors[name].shape:
                raise ValueError(f"shape mismatch for {name}")
            p.value[...] = tensors[name]

