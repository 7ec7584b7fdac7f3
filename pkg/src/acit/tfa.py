"""Temporal aggregation: CLS-prefixed post-norm encoder, MLP head and weighted BCE."""

from __future__ import annotations

import numpy as np

from .attention import AttentionParams, mha, positional_encoding, prepend_cls
from .layers import FeedForward, LayerNorm, Linear, Module
from .tensor import (ConfigError, ContractError, Tensor, add, bce_with_logits, dropout, index,
                     mean, mul, relu, reshape, sum_all)


class EncoderLayer(Module):
    def __init__(self, rng: np.random.Generator, d: int, heads: int, ffn_hidden: int, dtype,
                 eps: float = 1e-5):
        self.attn = AttentionParams(rng, d, d, heads, dtype)
        self.norm1 = LayerNorm(d, dtype, eps)
        self.ffn = FeedForward(rng, d, ffn_hidden, dtype)
        self.norm2 = LayerNorm(d, dtype, eps)


def encoder_layer(x: Tensor, layer: EncoderLayer, expected_len: int | None = None) -> Tensor:
    """x1 = LN(x + MHSA(x)); out = LN(x1 + FFN(x1))."""
    if expected_len is not None and x.shape[-2] != expected_len:
        raise ContractError(f"encoder input length {x.shape[-2]} != {expected_len}")
    x1 = layer.norm1(add(x, mha(x, x, layer.attn)))
    return layer.norm2(add(x1, layer.ffn(x1)))


class TemporalEncoder(Module):
    def __init__(self, rng: np.random.Generator, d: int, heads: int, ffn_hidden: int,
                 n_layers: int, dtype, eps: float = 1e-5):
        self.cls = Tensor(rng.normal(0.0, 0.02, size=d), requires_grad=True, dtype=dtype)
        self.layers = [EncoderLayer(rng, d, heads, ffn_hidden, dtype, eps) for _ in range(n_layers)]


def temporal_encode(seq: Tensor, enc: TemporalEncoder, use_pe: bool = True,
                    trace: dict | None = None) -> Tensor:
    """(..., N, d) -> final-layer CLS state (..., d)."""
    x = prepend_cls(seq, enc.cls)
    length, d = x.shape[-2:]
    if use_pe:
        x = add(x, positional_encoding(length, d, dtype=x.dtype))
    if trace is not None:
        trace.setdefault("encoder_input", (length, d))
    for layer in enc.layers:
        x = encoder_layer(x, layer, expected_len=length)
    return index(x, (Ellipsis, 0, slice(None)))


class MlpHead(Module):
    def __init__(self, rng: np.random.Generator, d: int, hidden: int, dtype):
        self.hidden = Linear(rng, d, hidden, dtype)
        self.out = Linear(rng, hidden, 1, dtype)

    def regularized(self) -> list[Tensor]:
        return [self.hidden.w, self.out.w]


def mlp_head(x: Tensor, head: MlpHead, dropout_p: float = 0.0, training: bool = False,
             rng: np.random.Generator | None = None) -> Tensor:
    """(..., d) -> (...) logits; dropout sits before the output unit."""
    h = dropout(relu(head.hidden(x)), dropout_p, rng, training)
    out = head.out(h)
    return reshape(out, out.shape[:-1])


def tfa_forward(fused: Tensor, enc: TemporalEncoder, head: MlpHead, use_pe: bool = True,
                dropout_p: float = 0.0, training: bool = False,
                rng: np.random.Generator | None = None, trace: dict | None = None) -> Tensor:
    return mlp_head(temporal_encode(fused, enc, use_pe, trace), head, dropout_p, training, rng)


def pooled_forward(fused: Tensor, head: MlpHead, dropout_p: float = 0.0, training: bool = False,
                   rng: np.random.Generator | None = None) -> Tensor:
    """Ablation v1: mean over time instead of the encoder."""
    return mlp_head(mean(fused, axis=-2), head, dropout_p, training, rng)


def sample_weights(labels, w_pos: float, w_neg: float) -> np.ndarray:
    if w_pos <= 0 or w_neg <= 0:
        raise ConfigError(f"class weights must be positive, got ({w_pos}, {w_neg})")
    labels = np.asarray(labels)
    return np.where(labels == 1, w_pos, w_neg)


def weighted_bce(logit: Tensor, label, w_pos: float = 1.0, w_neg: float = 1.0) -> Tensor:
    """Mean of w(y) * (softplus(z) - y z); stable for any finite logit."""
    if not isinstance(logit, Tensor):
        logit = Tensor(np.asarray(logit, dtype=np.float64))
    return bce_with_logits(logit, label, sample_weights(label, w_pos, w_neg))


def l2_penalty(weights: list[Tensor], coeff: float) -> Tensor | None:
    if coeff == 0.0 or not weights:
        return None
    total = None
    for w in weights:
        term = sum_all(mul(w, w))
        total = term if total is None else add(total, term)
    return mul(Tensor(np.asarray(coeff), dtype=total.dtype), total)
