"""Trainable patch-embedding stand-in for the pretrained visual backbone.

Frames of ``S x S x 3`` are cut into a ``grid x grid`` array of
non-overlapping square patches; each patch is flattened (row, column,
channel) and projected to ``C`` channels.  Precomputed maps can be
injected instead through TSR files.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tsr
from .layers import Linear, Module
from .tensor import ContractError, DimensionError, Tensor, linear, reshape, transpose

MODALITIES = ("lrgb", "lof", "gs", "gof")


@dataclass
class FeatureMapSeq:
    data: np.ndarray  # (N, grid, grid, C)
    modality: str = "lrgb"

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")

    @property
    def channels(self) -> int:
        return self.data.shape[-1]


class PatchEmbed(Module):
    def __init__(self, rng: np.random.Generator, channels: int, dtype, frame_size: int = 256,
                 grid: int = 8):
        self.frame_size = frame_size
        self.grid = grid
        patch = frame_size // grid
        self.proj = Linear(rng, patch * patch * 3, channels, dtype)

    def __call__(self, frames: Tensor) -> Tensor:
        return patch_embed(frames, self.proj.w, self.proj.b, self.frame_size, self.grid)


def patchify(frames: Tensor, frame_size: int = 256, grid: int = 8) -> Tensor:
    """(..., S, S, 3) -> (..., grid, grid, patch*patch*3)."""
    if frames.shape[-3:] != (frame_size, frame_size, 3):
        raise DimensionError(f"expected frames of (..., {frame_size}, {frame_size}, 3), got {frames.shape}")
    lead = frames.shape[:-3]
    p = frame_size // grid
    x = reshape(frames, (*lead, grid, p, grid, p, 3))
    n = len(lead)
    x = transpose(x, (*range(n), n, n + 2, n + 1, n + 3, n + 4))
    return reshape(x, (*lead, grid, grid, p * p * 3))


def patch_embed(frame: Tensor, w: Tensor, b: Tensor | None = None, frame_size: int = 256,
                grid: int = 8) -> Tensor:
    return linear(patchify(frame, frame_size, grid), w, b)


def encode_clip(frames: Tensor, embed: PatchEmbed, seq_len: int = 16) -> Tensor:
    """Per-frame patch embedding with shared weights: (N,S,S,3) -> (N,grid,grid,C)."""
    if frames.ndim < 4 or frames.shape[-4] != seq_len:
        raise ContractError(f"clip must hold {seq_len} frames, got shape {frames.shape}")
    return embed(frames)


def write_features(path, fmap: FeatureMapSeq | np.ndarray) -> None:
    data = fmap.data if isinstance(fmap, FeatureMapSeq) else fmap
    tsr.write(path, data)


def load_features(path, modality: str = "lrgb", seq_len: int = 16, grid: int = 8,
                  channels: int | None = None) -> FeatureMapSeq:
    arr = tsr.read(path)
    if arr.ndim != 4:
        raise tsr.FormatError(f"feature file must have rank 4, got {arr.ndim}", 6, path)
    if arr.shape[:3] != (seq_len, grid, grid):
        raise tsr.FormatError(f"feature file dims {arr.shape} != ({seq_len},{grid},{grid},C)", 8, path)
    if channels is not None and arr.shape[3] != channels:
        raise tsr.FormatError(f"feature file has {arr.shape[3]} channels, expected {channels}", 20, path)
    return FeatureMapSeq(arr, modality)
