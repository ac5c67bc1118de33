"""Neural layers built on the autodiff primitives.

Each layer is a pair: ``init_*`` creates parameters inside a
:class:`ParameterSet` scope, and the forward function takes that scope.
Weights use uniform fan-in initialization, biases start at zero.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, ContractError, DimensionError
from . import tensor as T
from .params import ParameterSet
from .tensor import Tensor


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_linear(p: ParameterSet, d_in: int, d_out: int, rng: np.random.Generator) -> ParameterSet:
    p.add("weight", _uniform(rng, d_in, (d_in, d_out)))
    p.add("bias", np.zeros(d_out))
    return p


def linear(x, layer: ParameterSet) -> Tensor:
    w = layer["weight"]
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(f"linear expects width {w.shape[0]}, got {x.shape[-1]}")
    return T.rowwise_matmul(x, w) + layer["bias"]


def init_embedding(p: ParameterSet, count: int, width: int, rng: np.random.Generator) -> ParameterSet:
    p.add("table", _uniform(rng, count, (count, width)))
    return p


def embedding(index, layer: ParameterSet) -> Tensor:
    table = layer["table"]
    idx = np.asarray(index)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ContractError(f"embedding index out of range [0, {table.shape[0]})")
    return T.take_rows(table, idx)


def init_layer_norm(p: ParameterSet, width: int) -> ParameterSet:
    p.add("gain", np.ones(width))
    p.add("shift", np.zeros(width))
    return p


def layer_norm(x, layer: ParameterSet) -> Tensor:
    return T.normalize_rows(T.as_tensor(x)) * layer["gain"] + layer["shift"]


def init_attention(p: ParameterSet, width: int, heads: int, rng: np.random.Generator) -> ParameterSet:
    if width % heads:
        raise ConfigError(f"width {width} is not divisible by {heads} heads")
    for name in ("query", "key", "value", "out"):
        init_linear(p.scope(name), width, width, rng)
    return p


def split_heads(x: Tensor, heads: int) -> Tensor:
    """(..., n, d) -> (..., heads, n, d // heads)."""
    *lead, n, d = x.shape
    y = T.reshape(x, (*lead, n, heads, d // heads))
    k = len(lead)
    return T.transpose(y, (*range(k), k + 1, k, k + 2))


def merge_heads(x: Tensor) -> Tensor:
    """(..., heads, n, dh) -> (..., n, heads * dh)."""
    *lead, h, n, dh = x.shape
    k = len(lead)
    return T.reshape(T.transpose(x, (*range(k), k + 1, k, k + 2)), (*lead, n, h * dh))


def attend(q: Tensor, k: Tensor, v: Tensor, heads: int, return_weights: bool = False, mask=None):
    """Scaled dot-product attention on already-projected rows.

    ``mask`` (shape (..., n_keys), True = attend) hides padding keys.
    """
    if k.shape[-2] == 0:
        raise ContractError("attention over an empty memory")
    dh = q.shape[-1] // heads
    qh, kh, vh = split_heads(q, heads), split_heads(k, heads), split_heads(v, heads)
    scores = T.matmul(qh, T.swap_last(kh)) * (1.0 / math.sqrt(dh))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=-1).all():
            raise ContractError("every query needs at least one unmasked key")
        scores = T.where(mask[..., None, None, :], scores, -np.inf)
    weights = T.softmax(scores, axis=-1)
    ctx = merge_heads(T.matmul(weights, vh))
    return (ctx, weights) if return_weights else ctx


def multi_head_attention(query, keys_values, layer: ParameterSet, heads: int,
                         return_weights: bool = False, mask=None):
    """Project, attend per head, concatenate, project back.

    Inputs are (n, d) or batched (..., n, d).  No positional encoding is
    applied, so the result is invariant to the order of ``keys_values`` rows.
    """
    query, keys_values = T.as_tensor(query), T.as_tensor(keys_values)
    d = layer["query.weight"].shape[0]
    if d % heads:
        raise ConfigError(f"width {d} is not divisible by {heads} heads")
    if keys_values.ndim < 2 or keys_values.shape[-2] == 0:
        raise ContractError("multi_head_attention needs at least one key/value row")
    if query.shape[-1] != d or keys_values.shape[-1] != d:
        raise DimensionError(f"attention width {d} vs inputs {query.shape}, {keys_values.shape}")
    q = linear(query, layer.scope("query"))
    k = linear(keys_values, layer.scope("key"))
    v = linear(keys_values, layer.scope("value"))
    ctx, weights = attend(q, k, v, heads, return_weights=True, mask=mask)
    out = linear(ctx, layer.scope("out"))
    return (out, weights) if return_weights else out


def init_transformer_block(p: ParameterSet, width: int, heads: int, rng: np.random.Generator,
                           hidden: int | None = None, residual_norm: bool = True) -> ParameterSet:
    init_attention(p.scope("attn"), width, heads, rng)
    init_linear(p.scope("ff1"), width, hidden or width, rng)
    init_linear(p.scope("ff2"), hidden or width, width, rng)
    if residual_norm:
        init_layer_norm(p.scope("norm1"), width)
        init_layer_norm(p.scope("norm2"), width)
    return p


def transformer_block(query, keys_values, layer: ParameterSet, heads: int, mask=None) -> Tensor:
    """attention -> add -> norm -> FC(ReLU) -> add -> norm.

    A block initialized with ``residual_norm=False`` has no norm parameters and
    reduces to attention followed by the ReLU feed-forward.
    """
    query = T.as_tensor(query)
    a = multi_head_attention(query, keys_values, layer.scope("attn"), heads, mask=mask)
    residual = "norm1.gain" in layer
    x = layer_norm(query + a, layer.scope("norm1")) if residual else a
    f = linear(T.relu(linear(x, layer.scope("ff1"))), layer.scope("ff2"))
    return layer_norm(x + f, layer.scope("norm2")) if residual else f


def init_lstm(p: ParameterSet, d_in: int, hidden: int, rng: np.random.Generator) -> ParameterSet:
    p.add("w_input", _uniform(rng, d_in, (d_in, 4 * hidden)))
    p.add("w_hidden", _uniform(rng, hidden, (hidden, 4 * hidden)))
    p.add("bias", np.zeros(4 * hidden))
    return p


def lstm_cell(x, h, c, layer: ParameterSet):
    """One LSTM step with gates ordered (input, forget, cell, output)."""
    x, h, c = T.as_tensor(x), T.as_tensor(h), T.as_tensor(c)
    wx, wh = layer["w_input"], layer["w_hidden"]
    hidden = wh.shape[0]
    if x.shape[-1] != wx.shape[0] or h.shape[-1] != hidden or c.shape[-1] != hidden:
        raise DimensionError(f"lstm widths: x {x.shape}, h {h.shape}, c {c.shape}")
    z = T.rowwise_matmul(x, wx) + T.rowwise_matmul(h, wh) + layer["bias"]
    i = T.sigmoid(z[..., :hidden])
    f = T.sigmoid(z[..., hidden:2 * hidden])
    g = T.tanh(z[..., 2 * hidden:3 * hidden])
    o = T.sigmoid(z[..., 3 * hidden:])
    c_new = f * c + i * g
    h_new = o * T.tanh(c_new)
    return h_new, c_new


class Categorical:
    """Categorical distribution parameterized by unnormalized logits."""

    def __init__(self, logits):
        self.logits = T.as_tensor(logits)
        self.log_probs = T.log_softmax(self.logits, axis=-1)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs.data)

    def sample(self, rng: np.random.Generator) -> int:
        cdf = np.cumsum(self.probs)
        a = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return min(a, len(cdf) - 1)

    def greedy(self) -> int:
        # np.argmax returns the first maximum, i.e. lowest-index tie-break
        return int(np.argmax(self.log_probs.data))

    def log_prob(self, action) -> Tensor:
        if self.log_probs.ndim == 1:
            return self.log_probs[int(action)]
        rows = np.arange(self.log_probs.shape[0])
        return self.log_probs[rows, np.asarray(action)]

    def entropy(self) -> Tensor:
        p = T.exp(self.log_probs)
        return -T.tsum(p * self.log_probs, axis=-1)


def categorical(logits) -> Categorical:
    return Categorical(logits)
