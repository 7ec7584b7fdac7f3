"""Motion pair interaction: speed/bounding-box embedding and bidirectional cross attention."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionParams, mha
from .layers import FeedForward, LayerNorm, Linear, Module
from .tensor import ConfigError, Tensor, add, dropout

FRAME_W, FRAME_H = 1920.0, 1080.0


class ValidationError(ValueError):
    pass


@dataclass
class MotionStats:
    """Speed standardisation fitted on the training split."""

    speed_mean: float = 0.0
    speed_std: float = 1.0

    @classmethod
    def fit(cls, speeds: np.ndarray) -> "MotionStats":
        speeds = np.asarray(speeds, dtype=np.float64)
        std = float(speeds.std())
        return cls(float(speeds.mean()), std if std > 0 else 1.0)


def check_bbox(bbox: np.ndarray) -> None:
    bbox = np.asarray(bbox)
    bad = (bbox[..., 0] > bbox[..., 2]) | (bbox[..., 1] > bbox[..., 3])
    if bad.any():
        first = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValidationError(f"bounding box corners out of order at index {first}")


def normalize_motion(speed: np.ndarray, bbox: np.ndarray, stats: MotionStats,
                     frame_w: float = FRAME_W, frame_h: float = FRAME_H):
    """Speed -> z-score, bbox pixels -> [0, 1] by image extents."""
    check_bbox(bbox)
    speed = (np.asarray(speed, dtype=np.float64) - stats.speed_mean) / stats.speed_std
    bbox = np.asarray(bbox, dtype=np.float64) / np.array([frame_w, frame_h, frame_w, frame_h])
    return speed, bbox


class MotionParams(Module):
    """``att_speed`` takes its query from the speed stream, ``att_bbox`` from the box stream."""

    def __init__(self, rng: np.random.Generator, d: int, heads: int, ffn_hidden: int, dtype,
                 eps: float = 1e-5):
        if d % heads:
            raise ConfigError(f"d={d} is not divisible by heads={heads}")
        self.heads = heads
        self.embed_speed = Linear(rng, 1, d, dtype)
        self.norm_speed = LayerNorm(d, dtype, eps)
        self.embed_bbox = Linear(rng, 4, d, dtype)
        self.norm_bbox = LayerNorm(d, dtype, eps)
        self.att_speed = AttentionParams(rng, d, d, heads, dtype)
        self.att_bbox = AttentionParams(rng, d, d, heads, dtype)
        self.norm_merge = LayerNorm(d, dtype, eps)
        self.ffn = FeedForward(rng, d, ffn_hidden, dtype)


def embed_motion(speed: Tensor, bbox: Tensor, p: MotionParams) -> tuple[Tensor, Tensor]:
    """(..., N, 1), (..., N, 4) -> X_S, X_B each (..., N, d)."""
    check_bbox(bbox.data)
    x_s = p.norm_speed(p.embed_speed(speed))
    x_b = p.norm_bbox(p.embed_bbox(bbox))
    return x_s, x_b


def motion_branches(x_s: Tensor, x_b: Tensor, p: MotionParams, cross: bool = True,
                    dropout_p: float = 0.0, training: bool = False,
                    rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
    """Speed-query and box-query branches, each with dropout and a query-side residual.

    ``cross=False`` is ablation v3: each stream attends only to itself.
    """
    kv_for_speed, kv_for_bbox = (x_b, x_s) if cross else (x_s, x_b)
    sb = add(x_s, dropout(mha(x_s, kv_for_speed, p.att_speed), dropout_p, rng, training))
    bs = add(x_b, dropout(mha(x_b, kv_for_bbox, p.att_bbox), dropout_p, rng, training))
    return sb, bs


def cross_modal_block(x_s: Tensor, x_b: Tensor, p: MotionParams, cross: bool = True,
                      dropout_p: float = 0.0, training: bool = False,
                      rng: np.random.Generator | None = None) -> Tensor:
    sb, bs = motion_branches(x_s, x_b, p, cross, dropout_p, training, rng)
    normed = p.norm_merge(add(sb, bs))
    return add(p.ffn(normed), normed)


def ammi_forward(speed: Tensor, bbox: Tensor, p: MotionParams, cross: bool = True,
                 dropout_p: float = 0.0, training: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
    x_s, x_b = embed_motion(speed, bbox, p)
    return cross_modal_block(x_s, x_b, p, cross, dropout_p, training, rng)
