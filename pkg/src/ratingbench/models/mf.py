"""Biased matrix factorisation: ``mu + b_u + b_i + <p_u, q_i>``."""

from __future__ import annotations

import numpy as np

from ..features import EncodedData
from ..kernel import Embedding, Parameter
from .base import REGRESSION, ModelConfig, RatingModel, VocabSizes


class MatrixFactorization(RatingModel):
    kind = "mf"

    def __init__(self, config: ModelConfig, sizes: VocabSizes, label_mean: float = 3.0):
        super().__init__(config, sizes, label_mean)
        if config.head != REGRESSION:
            raise ValueError("matrix factorisation supports the regression head only")
        k, dt, rng = config.embed_dim, self.dtype, self.rng
        self.user = Embedding(sizes.users, k, rng, dtype=dt)
        self.item = Embedding(sizes.items, k, rng, dtype=dt)
        self.user_bias = Embedding(sizes.users, 1, rng, scale=0.0, dtype=dt)
        self.item_bias = Embedding(sizes.items, 1, rng, scale=0.0, dtype=dt)
        self.offset = Parameter(np.array([label_mean], dtype=dt))
        for emb in (self.user, self.item, self.user_bias, self.item_bias):
            emb.l2 = config.l2
        self._cache = None

    def scores(self, user_index: np.ndarray, item_index: np.ndarray) -> np.ndarray:
        """Unclamped scores; training uses these directly."""
        pu = self.user.forward(user_index)
        qi = self.item.forward(item_index)
        bu = self.user_bias.forward(user_index)[:, 0]
        bi = self.item_bias.forward(item_index)[:, 0]
        self._cache = (pu, qi)
        return self.offset.value[0] + bu + bi + np.einsum("bk,bk->b", pu, qi)

    def forward(self, batch: EncodedData) -> np.ndarray:
        return self.scores(batch.user, batch.item)[:, None]

    def backward(self, d_raw: np.ndarray) -> None:
        pu, qi = self._cache
        g = d_raw[:, 0]
        b = g.shape[0]
        self.offset.grad += g.sum()
        self.user.backward(g[:, None] * qi, b)
        self.item.backward(g[:, None] * pu, b)
        self.user_bias.backward(g[:, None], b)
        self.item_bias.backward(g[:, None], b)
