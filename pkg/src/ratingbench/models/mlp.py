"""ID-only multi-layer perceptron over concatenated user and item embeddings."""

from __future__ import annotations

import numpy as np

from ..features import EncodedData
from ..kernel import Dense, Dropout, Embedding, Module, ReLU
from .base import ModelConfig, RatingModel, VocabSizes


class FeedForward(Module):
    """Hidden ReLU layers (with dropout) followed by a linear output layer."""

    def __init__(self, d_in: int, hidden, d_out: int, rng, dropout: float = 0.0,
                 out_bias: np.ndarray | None = None, dtype=np.float64):
        self.layers = []
        width = d_in
        for h in hidden:
            self.layers += [Dense(width, h, rng, dtype=dtype), ReLU(), Dropout(dropout, rng)]
            width = h
        self.out = Dense(width, d_out, rng, dtype=dtype)
        if out_bias is not None:
            self.out.bias.value[...] = out_bias

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return self.out.forward(x)

    def backward(self, dy):
        dy = self.out.backward(dy)
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


class MLPModel(RatingModel):
    kind = "mlp"

    def __init__(self, config: ModelConfig, sizes: VocabSizes, label_mean: float = 3.0):
        super().__init__(config, sizes, label_mean)
        d, dt, rng = config.embed_dim, self.dtype, self.rng
        self.user = Embedding(sizes.users, d, rng, dtype=dt)
        self.item = Embedding(sizes.items, d, rng, dtype=dt)
        self.user.l2 = self.item.l2 = config.l2
        self.tower = FeedForward(2 * d, config.hidden, config.output_width, rng,
                                 config.dropout, self._output_bias(), dt)

    def forward(self, batch: EncodedData) -> np.ndarray:
        x = np.concatenate([self.user.forward(batch.user), self.item.forward(batch.item)], axis=1)
        return self.tower.forward(x)

    def backward(self, d_raw: np.ndarray) -> None:
        dx = self.tower.backward(d_raw)
        d = self.config.embed_dim
        b = dx.shape[0]
        self.user.backward(dx[:, :d], b)
        self.item.backward(dx[:, d:], b)
