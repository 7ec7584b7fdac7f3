"""Visual pair interaction: dual-path attention between a primary map and its flow."""

from __future__ import annotations

import numpy as np

from .attention import AttentionParams, positional_encoding, sdpa
from .layers import Linear, Module, zeros
from .tensor import ConfigError, DimensionError, Tensor, add, linear, mean, mul, reshape


class DualPathParams(Module):
    """Reductions, single-head self/guided attention and the scalar gate.

    ``ga.w_q`` projects the primary tokens (the second query), while
    ``ga.w_k``/``ga.w_v`` project the auxiliary tokens.
    """

    def __init__(self, rng: np.random.Generator, channels: int, d: int, dtype):
        self.reduce_primary = Linear(rng, channels, d, dtype)
        self.reduce_aux = Linear(rng, channels, d, dtype)
        self.sa = AttentionParams(rng, d, d, 1, dtype, out_proj=False)
        self.ga = AttentionParams(rng, d, d, 1, dtype, out_proj=False)
        self.alpha = zeros((), dtype)


class PooledVisualParams(Module):
    """Ablation v4: only the channel reductions survive."""

    def __init__(self, rng: np.random.Generator, channels: int, d: int, dtype):
        self.reduce_primary = Linear(rng, channels, d, dtype)
        self.reduce_aux = Linear(rng, channels, d, dtype)


def reduce_channels(fmap: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """1x1 convolution == the same affine map at every grid position."""
    if fmap.shape[-1] != w.shape[0]:
        raise DimensionError(f"reduce_channels: map {fmap.shape} vs weight {w.shape}")
    return linear(fmap, w, b)


def tokenize(fmap_step: Tensor, use_pe: bool = True) -> Tensor:
    """(..., g, g, d) -> (..., g*g, d); cell (r, c) becomes token g*r + c."""
    *lead, g1, g2, d = fmap_step.shape
    if g1 != g2:
        raise DimensionError(f"tokenize expects a square grid, got {fmap_step.shape}")
    tokens = reshape(fmap_step, (*lead, g1 * g2, d))
    if use_pe:
        tokens = add(tokens, positional_encoding(g1 * g2, d, dtype=tokens.dtype))
    return tokens


def dual_path(primary_tokens: Tensor, aux_tokens: Tensor, p: DualPathParams) -> Tensor:
    if primary_tokens.shape != aux_tokens.shape:
        raise DimensionError(f"dual_path: {primary_tokens.shape} vs {aux_tokens.shape}")
    x, a = primary_tokens, aux_tokens
    self_att = sdpa(linear(x, p.sa.w_q), linear(x, p.sa.w_k), linear(x, p.sa.w_v))
    x_res = add(x, self_att)
    guided = sdpa(linear(x, p.ga.w_q), linear(a, p.ga.w_k), linear(a, p.ga.w_v))
    return add(x_res, mul(p.alpha, guided))


def pool_pair(tokens_seq: Tensor) -> Tensor:
    """Global average pooling over the token axis: (..., N, T, d) -> (..., N, d)."""
    return mean(tokens_seq, axis=-2)


def _check_pair(primary: Tensor, aux: Tensor) -> None:
    if primary.shape != aux.shape:
        raise ConfigError(f"visual pair mismatch: primary {primary.shape} vs auxiliary {aux.shape}")


def avmi_forward(primary: Tensor, aux: Tensor, p: DualPathParams, use_pe: bool = True,
                 trace: dict | None = None) -> Tensor:
    """(..., N, g, g, C) x 2 -> (..., N, d)."""
    _check_pair(primary, aux)
    xp = tokenize(reduce_channels(primary, p.reduce_primary.w, p.reduce_primary.b), use_pe)
    xa = tokenize(reduce_channels(aux, p.reduce_aux.w, p.reduce_aux.b), use_pe)
    if trace is not None:
        trace.setdefault("tokens", xp.shape[-2:])
    return pool_pair(dual_path(xp, xa, p))


def pooled_visual_forward(primary: Tensor, aux: Tensor, p: PooledVisualParams) -> Tensor:
    _check_pair(primary, aux)

    def gap(fmap, layer):
        reduced = reduce_channels(fmap, layer.w, layer.b)
        *lead, g1, g2, d = reduced.shape
        return mean(reshape(reduced, (*lead, g1 * g2, d)), axis=-2)

    return add(gap(primary, p.reduce_primary), gap(aux, p.reduce_aux))
