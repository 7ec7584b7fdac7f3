"""Attention primitives shared by the visual, motion, fusion and temporal blocks."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .layers import Module, glorot
from .tensor import (ConfigError, DimensionError, Tensor, concat, expand, linear, matmul,
                     reshape, scale, softmax_last, swap_last, transpose)


def sdpa(q: Tensor, k: Tensor, v: Tensor, return_weights: bool = False):
    """softmax(q k^T / sqrt(d)) v over the last two axes."""
    d = q.shape[-1]
    if d == 0:
        raise DimensionError("sdpa: zero feature dimension")
    if k.shape[-1] != d:
        raise DimensionError(f"sdpa: query dim {q.shape} vs key dim {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"sdpa: key length {k.shape} vs value length {v.shape}")
    logits = scale(matmul(q, swap_last(k)), 1.0 / math.sqrt(d))
    weights = softmax_last(logits)
    out = matmul(weights, v)
    return (out, weights) if return_weights else out


class AttentionParams(Module):
    """Per-head projections stored concatenated along the output axis.

    Head ``h`` uses columns ``h*d_head:(h+1)*d_head`` of each of
    ``w_q``, ``w_k``, ``w_v``.
    """

    def __init__(self, rng: np.random.Generator, d_in: int, d_model: int, heads: int, dtype,
                 out_proj: bool = True, d_kv: int | None = None):
        if heads < 1 or d_model % heads:
            raise ConfigError(f"d_model={d_model} is not divisible by heads={heads}")
        d_kv = d_in if d_kv is None else d_kv
        self.heads = heads
        self.w_q = glorot(rng, d_in, d_model, dtype)
        self.w_k = glorot(rng, d_kv, d_model, dtype)
        self.w_v = glorot(rng, d_kv, d_model, dtype)
        self.w_o = glorot(rng, d_model, d_model, dtype) if out_proj else None


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, length, d = x.shape
    x = reshape(x, (*lead, length, heads, d // heads))
    n = len(lead)
    return transpose(x, (*range(n), n + 1, n, n + 2))


def _merge_heads(x: Tensor) -> Tensor:
    *lead, heads, length, dh = x.shape
    n = len(lead)
    x = transpose(x, (*range(n), n + 1, n, n + 2))
    return reshape(x, (*lead, length, heads * dh))


def mha(x_q: Tensor, x_kv: Tensor, p: AttentionParams, heads: int | None = None,
        return_weights: bool = False):
    """Multi-head attention: per-head sdpa, concatenate, project by ``w_o``."""
    heads = p.heads if heads is None else heads
    d_model = p.w_q.shape[1]
    if heads < 1 or d_model % heads:
        raise ConfigError(f"d_model={d_model} is not divisible by heads={heads}")
    q = _split_heads(linear(x_q, p.w_q), heads)
    k = _split_heads(linear(x_kv, p.w_k), heads)
    v = _split_heads(linear(x_kv, p.w_v), heads)
    out, weights = sdpa(q, k, v, return_weights=True)
    out = _merge_heads(out)
    if p.w_o is not None:
        out = linear(out, p.w_o)
    return (out, weights) if return_weights else out


@lru_cache(maxsize=32)
def _pe_table(length: int, d: int) -> np.ndarray:
    pos = np.arange(length, dtype=np.float64)[:, None]
    freq = np.power(10000.0, -np.arange(0, d, 2, dtype=np.float64) / d)
    table = np.empty((length, d), dtype=np.float64)
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq)
    table.setflags(write=False)
    return table


def positional_encoding(length: int, d: int, dtype="f64") -> Tensor:
    """Sinusoidal table: even columns sin(pos/10000^(2i/d)), odd columns cos."""
    if length < 1:
        raise ConfigError(f"positional encoding length must be >= 1, got {length}")
    if d < 2 or d % 2:
        raise ConfigError(f"positional encoding needs an even dimension, got {d}")
    return Tensor(_pe_table(length, d), dtype=dtype)


def prepend_cls(seq: Tensor, cls: Tensor) -> Tensor:
    d = seq.shape[-1]
    if cls.shape != (d,):
        raise DimensionError(f"prepend_cls: cls {cls.shape} vs sequence {seq.shape}")
    row = reshape(cls, (1, d))
    lead = seq.shape[:-2]
    if lead:
        row = expand(row, lead)
    return concat([row, seq], axis=-2)
