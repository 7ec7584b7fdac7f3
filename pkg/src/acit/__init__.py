"""Multimodal attention-fusion classifier for pedestrian crossing intention, on a numpy autodiff core."""

from .config import ModelConfig, TrainConfig, VARIANTS
from .model import AcitModel, Batch
from .tensor import Tape, Tensor, backward

__all__ = ["AcitModel", "Batch", "ModelConfig", "TrainConfig", "VARIANTS", "Tape", "Tensor", "backward"]
