"""Architecture and training settings."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .tensor import ConfigError

VARIANTS = ("full", "v1", "v2", "v3", "v4", "v5")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "full"
    channels: int = 64
    d_model: int = 32
    seq_len: int = 16
    grid: int = 8
    motion_heads: int = 4
    motion_ffn: int = 0  # 0 -> 2 * d_model
    motion_dropout: float = 0.1
    tfa_layers: int = 2
    tfa_heads: int = 6
    tfa_ffn: int = 0  # 0 -> round(8/3 * fused width)
    head_hidden: int = 128
    head_dropout: float = 0.3
    use_positional_encoding: bool = True
    frames_input: bool = False
    frame_size: int = 256
    ln_eps: float = 1e-5
    seed: int = 0
    dtype: str = "f32"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.d_model % 2:
            raise ConfigError("d_model must be even for the positional encoding")
        if self.d_model % self.motion_heads:
            raise ConfigError(f"d_model={self.d_model} not divisible by motion_heads={self.motion_heads}")
        if self.fused_dim % self.tfa_heads:
            raise ConfigError(f"fused width {self.fused_dim} not divisible by tfa_heads={self.tfa_heads}")
        if self.frame_size % self.grid:
            raise ConfigError("frame_size must be a multiple of grid")
        if self.dtype not in ("f32", "f64"):
            raise ConfigError(f"dtype must be f32 or f64, got {self.dtype!r}")
        if not 0.0 <= self.motion_dropout < 1.0 or not 0.0 <= self.head_dropout < 1.0:
            raise ConfigError("dropout rates must lie in [0, 1)")

    @property
    def tokens(self) -> int:
        return self.grid * self.grid

    @property
    def fused_dim(self) -> int:
        return 3 * self.d_model

    @property
    def motion_ffn_dim(self) -> int:
        return self.motion_ffn or 2 * self.d_model

    @property
    def tfa_ffn_dim(self) -> int:
        return self.tfa_ffn or round(8 * self.fused_dim / 3)

    @property
    def patch(self) -> int:
        return self.frame_size // self.grid

    @classmethod
    def wide(cls, **overrides) -> "ModelConfig":
        """Full widths: 1024-channel backbone maps, 256-wide tokens."""
        return cls(**{"channels": 1024, "d_model": 256, **overrides})

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        return cls(**overrides)

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-5
    batch_size: int = 8
    epochs: int = 20
    seed: int = 0
    class_weight_mode: str = "balanced"
    l2: float = 1e-3
    patience: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_batch_size: int = 32

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.class_weight_mode not in ("balanced", "none"):
            raise ConfigError("class_weight_mode must be 'balanced' or 'none'")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Step size tuned for the narrow desk model (see README)."""
        return cls(**{"lr": 3e-4, **overrides})

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


def config_keys(cls) -> dict[str, type]:
    return {f.name: f.type for f in fields(cls)}


def as_dict(cfg) -> dict:
    return asdict(cfg)
