"""Assembly of the full network and its five ablation variants.

variant  visual pairs       motion      fusion            temporal
full     dual-path          cross MHA   inter-modal       CLS encoder
v1       dual-path          cross MHA   inter-modal       mean pooling
v2       dual-path          cross MHA   sum + lift        CLS encoder
v3       dual-path          self MHA    inter-modal       CLS encoder
v4       pooled + add       cross MHA   inter-modal       CLS encoder
v5       dual-path          cross MHA   per-modality CLS encoders, then inter-modal on the CLS states
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ammi import MotionParams, MotionStats, ammi_forward, normalize_motion
from .avmi import DualPathParams, PooledVisualParams, avmi_forward, pooled_visual_forward
from .config import ModelConfig
from .encoder_stub import MODALITIES, PatchEmbed
from .layers import Module
from .mmff import (AdditiveFusionParams, InterModalParams, additive_fusion, mmff_forward,
                   refine_step)
from .rng import make_rng
from .tensor import DTYPES, Tensor, reshape
from .tfa import (MlpHead, TemporalEncoder, mlp_head, pooled_forward, temporal_encode,
                  tfa_forward)


@dataclass
class Batch:
    """Stacked clips. Visual arrays are (B, N, g, g, C) feature maps, or
    (B, N, S, S, 3) frames when the model owns a patch-embedding stub."""

    lrgb: np.ndarray
    lof: np.ndarray
    gs: np.ndarray
    gof: np.ndarray
    speed: np.ndarray  # (B, N, 1) raw units
    bbox: np.ndarray  # (B, N, 4) pixels
    labels: np.ndarray | None = None

    def __len__(self) -> int:
        return self.speed.shape[0]

    def visual(self, name: str) -> np.ndarray:
        return getattr(self, name)


class AcitModel(Module):
    def __init__(self, config: ModelConfig):
        cfg = config
        self.config = cfg
        self.stats = MotionStats()
        rng = make_rng(cfg.seed, "init")
        dt = DTYPES[cfg.dtype]
        d = cfg.d_model
        if cfg.frames_input:
            self.encoder = PatchEmbed(rng, cfg.channels, dt, cfg.frame_size, cfg.grid)
        visual = PooledVisualParams if cfg.variant == "v4" else DualPathParams
        self.local = visual(rng, cfg.channels, d, dt)
        self.global_ = visual(rng, cfg.channels, d, dt)
        self.motion = MotionParams(rng, d, cfg.motion_heads, cfg.motion_ffn_dim, dt, cfg.ln_eps)
        if cfg.variant == "v5":
            self.temporal_first = [
                TemporalEncoder(rng, d, cfg.motion_heads, round(8 * d / 3), cfg.tfa_layers, dt, cfg.ln_eps)
                for _ in range(3)
            ]
        if cfg.variant == "v2":
            self.fusion = AdditiveFusionParams(rng, d, dt)
        else:
            self.fusion = InterModalParams(rng, d, dt)
        if cfg.variant in ("full", "v2", "v3", "v4"):
            self.tfa = TemporalEncoder(rng, cfg.fused_dim, cfg.tfa_heads, cfg.tfa_ffn_dim,
                                       cfg.tfa_layers, dt, cfg.ln_eps)
        self.head = MlpHead(rng, cfg.fused_dim, cfg.head_hidden, dt)

    # ------------------------------------------------------------------
    def _visual_features(self, batch: Batch) -> dict[str, Tensor]:
        dt = self.config.dtype
        maps = {name: Tensor(batch.visual(name), dtype=dt) for name in MODALITIES}
        if self.config.frames_input:
            maps = {name: self.encoder(t) for name, t in maps.items()}
        return maps

    def forward(self, batch: Batch, training: bool = False, rng: np.random.Generator | None = None,
                trace: dict | None = None) -> Tensor:
        """Logits of shape (B,)."""
        cfg = self.config
        use_pe = cfg.use_positional_encoding
        maps = self._visual_features(batch)
        if trace is not None:
            trace["visual_in"] = maps["lrgb"].shape[1:]
        if cfg.variant == "v4":
            f_l = pooled_visual_forward(maps["lrgb"], maps["lof"], self.local)
            f_g = pooled_visual_forward(maps["gs"], maps["gof"], self.global_)
        else:
            f_l = avmi_forward(maps["lrgb"], maps["lof"], self.local, use_pe, trace)
            f_g = avmi_forward(maps["gs"], maps["gof"], self.global_, use_pe)

        speed, bbox = normalize_motion(batch.speed, batch.bbox, self.stats)
        f_m = ammi_forward(Tensor(speed, dtype=cfg.dtype), Tensor(bbox, dtype=cfg.dtype),
                           self.motion, cross=cfg.variant != "v3",
                           dropout_p=cfg.motion_dropout, training=training, rng=rng)
        if trace is not None:
            trace["F_L"], trace["F_G"], trace["F_M"] = f_l.shape[1:], f_g.shape[1:], f_m.shape[1:]

        head_args = dict(dropout_p=cfg.head_dropout, training=training, rng=rng)
        if cfg.variant == "v5":
            summaries = [temporal_encode(f, enc, use_pe)
                         for f, enc in zip((f_l, f_g, f_m), self.temporal_first)]
            refined = refine_step(summaries, self.fusion)
            vec = reshape(refined, (*refined.shape[:-2], cfg.fused_dim))
            logits = mlp_head(vec, self.head, **head_args)
        else:
            if cfg.variant == "v2":
                fused = additive_fusion(f_l, f_g, f_m, self.fusion)
            else:
                fused = mmff_forward(f_l, f_g, f_m, self.fusion)
            if trace is not None:
                trace["fused"] = fused.shape[1:]
            if cfg.variant == "v1":
                logits = pooled_forward(fused, self.head, **head_args)
            else:
                logits = tfa_forward(fused, self.tfa, self.head, use_pe, trace=trace, **head_args)
        if trace is not None:
            trace["logit"] = logits.shape[1:]
        return logits

    __call__ = forward

    def predict_proba(self, batch: Batch) -> np.ndarray:
        z = self.forward(batch, training=False).data.astype(np.float64)
        return 1.0 / (1.0 + np.exp(-z))

    def regularized_weights(self) -> list[Tensor]:
        return self.head.regularized()

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data = np.array(state[name], dtype=p.dtype)


def zero_batch(cfg: ModelConfig, size: int = 1) -> Batch:
    """All-zero inputs of the right shapes (feature maps or frames per ``cfg``)."""
    n = cfg.seq_len
    if cfg.frames_input:
        vis = (size, n, cfg.frame_size, cfg.frame_size, 3)
    else:
        vis = (size, n, cfg.grid, cfg.grid, cfg.channels)
    dt = DTYPES[cfg.dtype]
    maps = {m: np.zeros(vis, dtype=dt) for m in MODALITIES}
    return Batch(**maps, speed=np.zeros((size, n, 1)), bbox=np.zeros((size, n, 4)),
                 labels=np.zeros(size, dtype=np.int64))


def shape_trace(model: AcitModel) -> dict[str, tuple]:
    """Per-clip shapes at each pipeline stage (batch axis dropped)."""
    trace: dict[str, tuple] = {}
    model.forward(zero_batch(model.config), trace=trace)
    return trace
