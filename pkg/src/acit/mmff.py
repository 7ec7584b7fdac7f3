"""Per-time-step inter-modal attention over the local, global and motion features."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .layers import Linear, Module, glorot
from .tensor import (ContractError, DimensionError, Tensor, add, concat, linear, matmul,
                     reshape, scale, softmax_last, swap_last)

GROUPS = ("L", "G", "M")


class InterModalParams(Module):
    def __init__(self, rng: np.random.Generator, d: int, dtype):
        self.w_q = [glorot(rng, d, d, dtype) for _ in GROUPS]
        self.w_k = [glorot(rng, d, d, dtype) for _ in GROUPS]
        self.w_v = [glorot(rng, d, d, dtype) for _ in GROUPS]


class AdditiveFusionParams(Module):
    """Ablation v2: sum the three features and lift to the fused width."""

    def __init__(self, rng: np.random.Generator, d: int, dtype):
        self.lift = Linear(rng, d, 3 * d, dtype)


def intermodal_weights(q: Tensor, k: Tensor) -> Tensor:
    """(..., 3, d) x (..., 3, d) -> (..., 3, 3); row i is softmax_j(q_i . k_j / sqrt(d))."""
    if q.shape != k.shape:
        raise DimensionError(f"intermodal_weights: {q.shape} vs {k.shape}")
    d = q.shape[-1]
    return softmax_last(scale(matmul(q, swap_last(k)), 1.0 / math.sqrt(d)))


def _stack(rows: Sequence[Tensor]) -> Tensor:
    return concat([reshape(r, (*r.shape[:-1], 1, r.shape[-1])) for r in rows], axis=-2)


def refine_step(features: Sequence[Tensor], p: InterModalParams, return_weights: bool = False):
    """Three (..., d) features -> refined (..., 3, d) with row i = sum_j a_ij V_j."""
    if len(features) != 3:
        raise ContractError(f"refine_step expects three modality features, got {len(features)}")
    if len({f.shape for f in features}) != 1:
        raise DimensionError(f"refine_step: shapes differ {[f.shape for f in features]}")
    q = _stack([linear(f, w) for f, w in zip(features, p.w_q)])
    k = _stack([linear(f, w) for f, w in zip(features, p.w_k)])
    v = _stack([linear(f, w) for f, w in zip(features, p.w_v)])
    weights = intermodal_weights(q, k)
    out = matmul(weights, v)
    return (out, weights) if return_weights else out


def mmff_forward(f_l: Tensor, f_g: Tensor, f_m: Tensor, p: InterModalParams) -> Tensor:
    """(..., N, d) x 3 -> (..., N, 3d), refined [L | G | M] per step."""
    if not f_l.shape == f_g.shape == f_m.shape:
        raise ContractError(f"modality sequences differ: {f_l.shape}, {f_g.shape}, {f_m.shape}")
    refined = refine_step((f_l, f_g, f_m), p)
    *lead, three, d = refined.shape
    return reshape(refined, (*lead, three * d))


def additive_fusion(f_l: Tensor, f_g: Tensor, f_m: Tensor, p: AdditiveFusionParams) -> Tensor:
    if not f_l.shape == f_g.shape == f_m.shape:
        raise ContractError(f"modality sequences differ: {f_l.shape}, {f_g.shape}, {f_m.shape}")
    return p.lift(add(add(f_l, f_g), f_m))
