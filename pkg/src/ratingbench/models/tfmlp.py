"""Transformer-MLP: attribute- and rating-aware sequential rating predictor.

Each history step embeds its item id, mean title-token embedding, mean
attribute embedding and rating bucket, combined by ``add`` (width d) or
``concat`` (width 4d). A bidirectional encoder with learned positions runs
over the right-aligned window and the output at the most recent slot is the
user summary. Users with no history get a learned "no-history" vector. The
summary is concatenated with the candidate's item, title and attribute
embeddings and fed to an MLP head.
"""

from __future__ import annotations

import numpy as np

from ..features import EncodedData
from ..kernel import Embedding, EmbeddingBag, Parameter, TransformerEncoder
from .base import ModelConfig, RatingModel, VocabSizes
from .mlp import FeedForward


class TransformerMLP(RatingModel):
    kind = "tfmlp"

    def __init__(self, config: ModelConfig, sizes: VocabSizes, label_mean: float = 3.0):
        super().__init__(config, sizes, label_mean)
        d, dt, rng = config.embed_dim, self.dtype, self.rng
        width = self.step_width
        if width % config.heads:
            raise ValueError(f"step width {width} not divisible by {config.heads} heads")
        self.item = Embedding(sizes.items, d, rng, dtype=dt)
        self.title = EmbeddingBag(sizes.title_tokens, d, rng, dtype=dt)
        self.attribute = EmbeddingBag(sizes.attributes, d, rng, dtype=dt)
        self.rating = Embedding(5, d, rng, dtype=dt)
        self.item.l2 = config.l2
        self.encoder = TransformerEncoder(width, config.heads, config.layers, sizes.max_history,
                                          rng, config.dropout, dt)
        self.no_history = Parameter(rng.uniform(-0.05, 0.05, size=width).astype(dt))
        self.tower = FeedForward(width + 3 * d, config.hidden, config.output_width, rng,
                                 config.dropout, self._output_bias(), dt)
        self._cache = None

    @property
    def step_width(self) -> int:
        d = self.config.embed_dim
        return d if self.config.aggregation == "add" else 4 * d

    def forward(self, batch: EncodedData) -> np.ndarray:
        h = batch.max_history
        if h > self.sizes.max_history:
            raise ValueError(f"history length {h} exceeds {self.sizes.max_history}")
        table = batch.table
        # one lookup covering the H history slots plus the candidate in slot H
        rows = np.concatenate([batch.hist_rows, batch.cand_row[:, None]], axis=1)
        valid = rows >= 0
        safe = np.where(valid, rows, 0)
        e_item = self.item.forward(table.item_index[safe])
        e_title = self.title.forward(table.title_ids[safe])
        e_attr = self.attribute.forward(table.attribute_ids[safe])
        e_rating = self.rating.forward(batch.hist_bucket)

        parts = (e_item[:, :h], e_title[:, :h], e_attr[:, :h], e_rating)
        if self.config.aggregation == "add":
            steps = parts[0] + parts[1] + parts[2] + parts[3]
        else:
            steps = np.concatenate(parts, axis=-1)

        mask = valid[:, :h].copy()
        empty = batch.hist_len == 0
        mask[empty, h - 1] = True  # placeholder slot; its output is replaced below
        steps = steps * mask[..., None]
        encoded = self.encoder.forward(steps, mask)
        summary = np.where(empty[:, None], self.no_history.value, encoded[:, -1])

        fused = np.concatenate([summary, e_item[:, h], e_title[:, h], e_attr[:, h]], axis=-1)
        self._cache = (h, mask, empty, encoded.shape)
        return self.tower.forward(fused)

    def backward(self, d_raw: np.ndarray) -> None:
        h, mask, empty, enc_shape = self._cache
        d, w = self.config.embed_dim, self.step_width
        b = d_raw.shape[0]
        d_fused = self.tower.backward(d_raw)
        d_summary = d_fused[:, :w]
        self.no_history.grad += d_summary[empty].sum(axis=0)

        d_encoded = np.zeros(enc_shape, dtype=d_fused.dtype)
        d_encoded[:, -1] = np.where(empty[:, None], 0.0, d_summary)
        d_steps = self.encoder.backward(d_encoded) * mask[..., None]

        if self.config.aggregation == "add":
            g_item = g_title = g_attr = g_rating = d_steps
        else:
            g_item, g_title, g_attr, g_rating = np.split(d_steps, 4, axis=-1)

        def with_candidate(g_hist, g_cand):
            return np.concatenate([g_hist, g_cand[:, None]], axis=1)

        self.item.backward(with_candidate(g_item, d_fused[:, w:w + d]), b)
        self.title.backward(with_candidate(g_title, d_fused[:, w + d:w + 2 * d]))
        self.attribute.backward(with_candidate(g_attr, d_fused[:, w + 2 * d:]))
        self.rating.backward(g_rating, b)
