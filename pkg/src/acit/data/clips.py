"""Clip extraction, class weights and in-memory clip datasets."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..encoder_stub import MODALITIES
from ..model import Batch
from ..rng import make_rng
from ..tensor import ConfigError
from .synth import Scenario, SynthParams, generate_scenario, scenario_features

CLIP_LEN = 16
OVERLAP = 0.8
# 16 * (1 - 0.8) = 3.2 frames, rounded down to whole frames
STRIDE = int(CLIP_LEN * (1 - OVERLAP) + 1e-9)


@dataclass
class ClipSample:
    clip_id: str
    scenario_id: int
    start: int
    event_frame: int
    label: int
    speed: np.ndarray  # (16, 1)
    bbox: np.ndarray  # (16, 4)
    visual: dict[str, np.ndarray] | None = None  # modality -> (16, g, g, C)

    @property
    def end(self) -> int:
        return self.start + CLIP_LEN


def clip_id(scenario_id: int, start: int) -> str:
    return f"s{scenario_id:020d}_f{start:04d}"


def clip_starts(length: int, event_frame: int | None = None, clip_len: int = CLIP_LEN,
                stride: int = STRIDE) -> list[int]:
    usable = length if event_frame is None else min(length, event_frame)
    if usable < clip_len:
        return []
    return list(range(0, usable - clip_len + 1, stride))


def extract_clips(scenario: Scenario, features: dict[str, np.ndarray] | None = None) -> list[ClipSample]:
    """Stride-3 windows of 16 frames that end at or before the event frame."""
    starts = clip_starts(scenario.length, scenario.event_frame)
    if not starts:
        warnings.warn(f"scenario {scenario.seed}: {scenario.length} frames < {CLIP_LEN}, no clips")
    clips = []
    for s in starts:
        sl = slice(s, s + CLIP_LEN)
        visual = None if features is None else {m: features[m][sl] for m in MODALITIES}
        clips.append(ClipSample(clip_id(scenario.seed, s), scenario.seed, s, scenario.event_frame,
                                scenario.label, scenario.speed[sl].copy(), scenario.bbox[sl].copy(),
                                visual))
    return clips


def class_weights(n_pos: int, n_neg: int) -> tuple[float, float]:
    """(w_pos, w_neg): majority class weight 1, minority weight majority/minority."""
    if n_pos <= 0 or n_neg <= 0:
        raise ConfigError(f"class weights need both classes present, got pos={n_pos} neg={n_neg}")
    if n_pos >= n_neg:
        return 1.0, n_pos / n_neg
    return n_neg / n_pos, 1.0


class ClipDataset:
    def __init__(self, clips: list[ClipSample]):
        self.clips = list(clips)

    def __len__(self) -> int:
        return len(self.clips)

    def __getitem__(self, i: int) -> ClipSample:
        return self.clips[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([c.label for c in self.clips], dtype=np.int64)

    @property
    def scenario_ids(self) -> set[int]:
        return {c.scenario_id for c in self.clips}

    def counts(self) -> tuple[int, int]:
        labels = self.labels
        return int((labels == 1).sum()), int((labels == 0).sum())

    def batch(self, indices) -> Batch:
        clips = [self.clips[i] for i in indices]
        visual = {m: np.stack([c.visual[m] for c in clips]) for m in MODALITIES}
        return Batch(**visual,
                     speed=np.stack([c.speed for c in clips]),
                     bbox=np.stack([c.bbox for c in clips]),
                     labels=np.array([c.label for c in clips], dtype=np.int64))

    def speeds(self) -> np.ndarray:
        return np.concatenate([c.speed.ravel() for c in self.clips]) if self.clips else np.zeros(0)


def scenario_seeds(seed: int, split: str, count: int) -> list[int]:
    rng = make_rng(seed, f"dataset/{split}")
    return [int(s) for s in rng.integers(0, 2**62, size=count)]


def build_split(seed: int, split: str, n_clips: int, params: SynthParams = SynthParams(),
                with_features: bool = True) -> ClipDataset:
    """Generate scenarios for one split until ``n_clips`` clips exist (last one truncated)."""
    clips: list[ClipSample] = []
    # every scenario yields at least one clip, so n_clips seeds always suffice
    for s in scenario_seeds(seed, split, n_clips):
        sc = generate_scenario(s, params)
        feats = scenario_features(sc, params) if with_features else None
        clips.extend(extract_clips(sc, feats))
        if len(clips) >= n_clips:
            break
    return ClipDataset(clips[:n_clips])


SPLIT_FRACTIONS = (("train", 0.7), ("val", 0.15), ("test", 0.15))


def assign_splits(n_scenarios: int) -> list[str]:
    """Deterministic scenario-level split assignment in 70/15/15 proportion."""
    out = []
    bounds = np.cumsum([f for _, f in SPLIT_FRACTIONS])
    for i in range(n_scenarios):
        u = (i + 0.5) / n_scenarios
        out.append(SPLIT_FRACTIONS[int(np.searchsorted(bounds, u))][0])
    return out


def build_scenario_splits(n_scenarios: int, seed: int, params: SynthParams = SynthParams(),
                          with_features: bool = True) -> dict[str, ClipDataset]:
    seeds = scenario_seeds(seed, "all", n_scenarios)
    splits: dict[str, list[ClipSample]] = {name: [] for name, _ in SPLIT_FRACTIONS}
    for s, split in zip(seeds, assign_splits(n_scenarios)):
        sc = generate_scenario(s, params)
        feats = scenario_features(sc, params) if with_features else None
        splits[split].extend(extract_clips(sc, feats))
    return {k: ClipDataset(v) for k, v in splits.items()}
