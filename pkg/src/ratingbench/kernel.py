"""A small differentiable-compute kernel on numpy arrays.

There is no autodiff graph. Each layer caches what it needs during
``forward`` and ``backward`` consumes an upstream gradient, accumulates
into its :class:`Parameter` gradients and returns the input gradient.
Everything supports arbitrary leading batch dimensions unless noted.
"""

from __future__ import annotations

import json
import math
import struct
from typing import Iterable, Iterator

import numpy as np


class TrainingError(RuntimeError):
    """Raised when optimisation produces non-finite values."""


class Parameter:
    """A trainable tensor with its gradient and Adam moment buffers."""

    __slots__ = ("value", "grad", "m", "v", "step_count")

    def __init__(self, value: np.ndarray):
        self.value = np.ascontiguousarray(value)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.step_count = 0

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Parameter(shape={self.value.shape}, dtype={self.value.dtype})"


class Module:
    """Base class providing recursive, deterministically named parameters."""

    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, attr in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(attr, Parameter):
                yield full, attr
            elif isinstance(attr, Module):
                yield from attr.named_parameters(full + ".")
            elif isinstance(attr, (list, tuple)):
                for i, sub in enumerate(attr):
                    if isinstance(sub, Module):
                        yield from sub.named_parameters(f"{full}.{i}.")
                    elif isinstance(sub, Parameter):
                        yield f"{full}.{i}", sub

    def parameters(self) -> dict[str, Parameter]:
        return dict(self.named_parameters())

    def modules(self) -> Iterator["Module"]:
        yield self
        for attr in vars(self).values():
            if isinstance(attr, Module):
                yield from attr.modules()
            elif isinstance(attr, (list, tuple)):
                for sub in attr:
                    if isinstance(sub, Module):
                        yield from sub.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()


def glorot_uniform(rng: np.random.Generator, d_in: int, d_out: int, dtype=np.float64) -> np.ndarray:
    limit = math.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out)).astype(dtype)


# ---------------------------------------------------------------------------
# dense


def dense(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None) -> np.ndarray:
    """Affine map ``x @ weight + bias`` over the last axis."""
    if x.shape[-1] != weight.shape[0]:
        raise ValueError(f"dense: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ValueError(f"dense: bias shape {bias.shape} != ({weight.shape[1]},)")
    y = x @ weight
    return y + bias if bias is not None else y


def dense_backward(dy: np.ndarray, x: np.ndarray, weight: np.ndarray):
    """Return ``(dx, dweight, dbias)`` for :func:`dense`."""
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    return dy @ weight.T, x2.T @ dy2, dy2.sum(axis=0)


class Dense(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True,
                 dtype=np.float64):
        self.weight = Parameter(glorot_uniform(rng, d_in, d_out, dtype))
        self.bias = Parameter(np.zeros(d_out, dtype=dtype)) if bias else None
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return dense(x, self.weight.value, None if self.bias is None else self.bias.value)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx, dw, db = dense_backward(dy, self._x, self.weight.value)
        self.weight.grad += dw
        if self.bias is not None:
            self.bias.grad += db
        return dx


class ReLU(Module):
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class Dropout(Module):
    """Inverted dropout; identity when not training or ``p == 0``."""

    def __init__(self, p: float, rng: np.random.Generator):
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must lie in [0, 1)")
        self.p = p
        self.rng = rng
        self._scale = None

    def forward(self, x):
        if not self.training or self.p == 0.0:
            self._scale = None
            return x
        self._scale = (self.rng.random(x.shape) >= self.p).astype(x.dtype) / (1.0 - self.p)
        return x * self._scale

    def backward(self, dy):
        return dy if self._scale is None else dy * self._scale


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-6, dtype=np.float64):
        self.gain = Parameter(np.ones(d, dtype=dtype))
        self.shift = Parameter(np.zeros(d, dtype=dtype))
        self.eps = eps
        self._cache = None

    def forward(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(x.var(axis=-1, keepdims=True) + self.eps)
        xhat = (x - mu) * inv_std
        self._cache = (xhat, inv_std)
        return xhat * self.gain.value + self.shift.value

    def backward(self, dy):
        xhat, inv_std = self._cache
        d = xhat.shape[-1]
        self.gain.grad += (dy * xhat).reshape(-1, d).sum(axis=0)
        self.shift.grad += dy.reshape(-1, d).sum(axis=0)
        dxhat = dy * self.gain.value
        return inv_std * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                          - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# embeddings


class Embedding(Module):
    """Row lookup. ``l2`` adds ``l2 * ||row||^2`` per lookup, averaged like the loss."""

    def __init__(self, n: int, d: int, rng: np.random.Generator, scale: float = 0.05,
                 dtype=np.float64):
        self.table = Parameter(rng.uniform(-scale, scale, size=(n, d)).astype(dtype))
        self.l2 = 0.0
        self._ids = None

    @property
    def n(self) -> int:
        return self.table.value.shape[0]

    def forward(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.n):
            raise IndexError(f"embedding ids outside [0, {self.n})")
        self._ids = ids
        return self.table.value[ids]

    def backward(self, dy: np.ndarray, batch_size: int | None = None) -> None:
        ids = self._ids.reshape(-1)
        d = self.table.value.shape[1]
        grad = dy.reshape(-1, d)
        if self.l2:
            grad = grad + (2.0 * self.l2 / (batch_size or 1)) * self.table.value[ids]
        np.add.at(self.table.grad, ids, grad)


class EmbeddingBag(Module):
    """Mean of the embeddings of the non-negative ids along the last axis.

    Rows whose ids are all padding (-1) produce a zero vector.
    """

    def __init__(self, n: int, d: int, rng: np.random.Generator, scale: float = 0.05,
                 dtype=np.float64):
        self.table = Parameter(rng.uniform(-scale, scale, size=(n, d)).astype(dtype))
        self._cache = None

    def forward(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids)
        if ids.size and ids.max() >= self.table.value.shape[0]:
            raise IndexError("embedding bag id out of range")
        valid = ids >= 0
        count = valid.sum(axis=-1, keepdims=True)
        weight = (valid / np.maximum(count, 1)).astype(self.table.value.dtype)
        safe = np.where(valid, ids, 0)
        self._cache = (safe, weight)
        return np.einsum("...t,...td->...d", weight, self.table.value[safe])

    def backward(self, dy: np.ndarray) -> None:
        safe, weight = self._cache
        d = self.table.value.shape[1]
        contrib = weight[..., None] * dy[..., None, :]
        keep = weight.reshape(-1) > 0
        np.add.at(self.table.grad, safe.reshape(-1)[keep], contrib.reshape(-1, d)[keep])


# ---------------------------------------------------------------------------
# attention


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


class SelfAttention(Module):
    """Bidirectional multi-head self-attention over ``x[B, L, d]``.

    ``mask[B, L]`` is True for real slots; padded keys get ``-inf`` logits.
    Every row must contain at least one real slot.
    """

    def __init__(self, d: int, heads: int, rng: np.random.Generator, dtype=np.float64):
        if d % heads:
            raise ValueError(f"width {d} not divisible by {heads} heads")
        self.heads = heads
        self.q = Dense(d, d, rng, dtype=dtype)
        self.k = Dense(d, d, rng, dtype=dtype)
        self.v = Dense(d, d, rng, dtype=dtype)
        self.o = Dense(d, d, rng, dtype=dtype)
        self._cache = None
        self.last_weights = None

    def _split(self, x):
        b, l, d = x.shape
        return x.reshape(b, l, self.heads, d // self.heads).transpose(0, 2, 1, 3)

    def _merge(self, x):
        b, h, l, dh = x.shape
        return x.transpose(0, 2, 1, 3).reshape(b, l, h * dh)

    def forward(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        if x.ndim != 3:
            raise ValueError("self-attention expects x[B, L, d]")
        b, l, d = x.shape
        mask = np.ones((b, l), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if mask.shape != (b, l):
            raise ValueError(f"mask shape {mask.shape} != {(b, l)}")
        if not mask.any(axis=1).all():
            raise ValueError("self-attention over a fully padded sequence")
        q, k, v = (self._split(layer.forward(x)) for layer in (self.q, self.k, self.v))
        scale = 1.0 / math.sqrt(d // self.heads)
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale
        scores = np.where(mask[:, None, None, :], scores, -np.inf)
        weights = softmax(scores)
        out = self._merge(weights @ v)
        self._cache = (q, k, v, weights, scale)
        self.last_weights = weights
        return self.o.forward(out)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        q, k, v, weights, scale = self._cache
        d_out = self._split(self.o.backward(dy))
        d_weights = d_out @ v.transpose(0, 1, 3, 2)
        dv = weights.transpose(0, 1, 3, 2) @ d_out
        d_scores = weights * (d_weights - (d_weights * weights).sum(axis=-1, keepdims=True))
        dq = (d_scores @ k) * scale
        dk = (d_scores.transpose(0, 1, 3, 2) @ q) * scale
        return (self.q.backward(self._merge(dq)) + self.k.backward(self._merge(dk))
                + self.v.backward(self._merge(dv)))


class EncoderBlock(Module):
    """Post-norm transformer block: attention and a ReLU feed-forward, each residual."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator, dropout: float = 0.0,
                 ffn_mult: int = 2, dtype=np.float64):
        self.attn = SelfAttention(d, heads, rng, dtype)
        self.drop1 = Dropout(dropout, rng)
        self.norm1 = LayerNorm(d, dtype=dtype)
        self.ff1 = Dense(d, ffn_mult * d, rng, dtype=dtype)
        self.act = ReLU()
        self.ff2 = Dense(ffn_mult * d, d, rng, dtype=dtype)
        self.drop2 = Dropout(dropout, rng)
        self.norm2 = LayerNorm(d, dtype=dtype)

    def forward(self, x, mask):
        h = self.norm1.forward(x + self.drop1.forward(self.attn.forward(x, mask)))
        f = self.ff2.forward(self.act.forward(self.ff1.forward(h)))
        return self.norm2.forward(h + self.drop2.forward(f))

    def backward(self, dy):
        dh = self.norm2.backward(dy)
        df = self.drop2.backward(dh)
        dh = dh + self.ff1.backward(self.act.backward(self.ff2.backward(df)))
        dx = self.norm1.backward(dh)
        return dx + self.attn.backward(self.drop1.backward(dx))


class TransformerEncoder(Module):
    """Learned position embeddings followed by a stack of encoder blocks."""

    def __init__(self, d: int, heads: int, layers: int, max_len: int, rng: np.random.Generator,
                 dropout: float = 0.0, dtype=np.float64):
        self.position = Parameter(rng.uniform(-0.05, 0.05, size=(max_len, d)).astype(dtype))
        self.blocks = [EncoderBlock(d, heads, rng, dropout, dtype=dtype) for _ in range(layers)]

    def forward(self, x, mask):
        l = x.shape[1]
        if l > self.position.value.shape[0]:
            raise ValueError(f"sequence length {l} exceeds {self.position.value.shape[0]}")
        h = x + self.position.value[-l:]
        for block in self.blocks:
            h = block.forward(h, mask)
        return h

    def backward(self, dy):
        for block in reversed(self.blocks):
            dy = block.backward(dy)
        l = dy.shape[1]
        self.position.grad[-l:] += dy.sum(axis=0)
        return dy


# ---------------------------------------------------------------------------
# losses


def cross_entropy_5way(logits: np.ndarray, target) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy over 5 rating classes, averaged over the batch.

    Accepts ``logits[5]`` with an int target or ``logits[B, 5]`` with ``target[B]``.
    Returns the loss and its gradient with respect to ``logits``.
    """
    logits = np.asarray(logits)
    single = logits.ndim == 1
    z = logits[None, :] if single else logits
    t = np.atleast_1d(np.asarray(target))
    if z.shape[-1] != 5 or z.ndim != 2 or t.shape != (z.shape[0],):
        raise ValueError(f"expected logits[B, 5] and target[B], got {logits.shape} and {t.shape}")
    if not np.issubdtype(t.dtype, np.integer) or t.min() < 0 or t.max() > 4:
        raise ValueError("target classes must be integers in [0, 4]")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_prob = shifted - log_norm
    rows = np.arange(z.shape[0])
    loss = -log_prob[rows, t].mean()
    grad = np.exp(log_prob)
    grad[rows, t] -= 1.0
    grad /= z.shape[0]
    return float(loss), grad[0] if single else grad


def mse(predictions: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ValueError(f"mse expects equal 1-d shapes, got {predictions.shape} and {labels.shape}")
    n = predictions.shape[0]
    if n == 0:
        raise ValueError("mse of an empty batch")
    diff = predictions - labels
    return float(diff @ diff / n), (2.0 / n) * diff


# ---------------------------------------------------------------------------
# optimiser


def adam_step(params: Iterable[Parameter], learning_rate: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise TrainingError(f"non-finite gradient in {p!r}")
    for p in params:
        p.step_count += 1
        g = p.grad
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * (g * g)
        m_hat = p.m / (1.0 - beta1 ** p.step_count)
        v_hat = p.v / (1.0 - beta2 ** p.step_count)
        p.value -= learning_rate * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    def __init__(self, params: dict[str, Parameter], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        adam_step(self.params.values(), self.lr, self.beta1, self.beta2, self.eps)


# ---------------------------------------------------------------------------
# checkpoints
#
# layout (little endian):
#   magic  b"RBCKPT01"                       8 bytes
#   header length H                          uint64
#   header                                   H bytes of UTF-8 JSON:
#       {"meta": {...}, "tensors": [{"name", "shape", "offset", "count"}, ...]}
#   payload                                  float32 values, tensors back to back,
#                                            offsets/counts in elements

CHECKPOINT_MAGIC = b"RBCKPT01"


def save_checkpoint(path, tensors: dict[str, np.ndarray | Parameter], meta: dict | None = None) -> None:
    entries, chunks, offset = [], [], 0
    for name in sorted(tensors):
        value = tensors[name]
        arr = np.asarray(value.value if isinstance(value, Parameter) else value, dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.reshape(-1).tobytes())
        offset += arr.size
    header = json.dumps({"meta": meta or {}, "tensors": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for chunk in chunks:
            fh.write(chunk)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        if fh.read(8) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a ratingbench checkpoint")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = np.frombuffer(fh.read(), dtype="<f4")
    out = {}
    for e in header["tensors"]:
        out[e["name"]] = payload[e["offset"]:e["offset"] + e["count"]].reshape(e["shape"]).copy()
    return out, header["meta"]
