"""Checkpoints: one TSR file per parameter plus a text index.

Layout::

    <dir>/model.cfg          key=value ModelConfig
    <dir>/index.tsv          name <TAB> file <TAB> shape
    <dir>/tensors/<name>.tsr
    <dir>/motion_stats.tsr   [speed_mean, speed_std] (f64)
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

import numpy as np

from . import tsr
from .ammi import MotionStats
from .config import ModelConfig
from .model import AcitModel
from .settings import format_kv, parse_kv, typed_update


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: AcitModel) -> None:
    root = Path(path)
    (root / "tensors").mkdir(parents=True, exist_ok=True)
    cfg = model.config
    (root / "model.cfg").write_text(format_kv({f.name: getattr(cfg, f.name) for f in fields(cfg)}))
    lines = []
    for name, p in model.named_parameters():
        rel = f"tensors/{name}.tsr"
        tsr.write(root / rel, p.data)
        lines.append(f"{name}\t{rel}\t{'x'.join(map(str, p.shape)) or 'scalar'}")
    (root / "index.tsv").write_text("\n".join(lines) + "\n")
    tsr.write(root / "motion_stats.tsr",
              np.array([model.stats.speed_mean, model.stats.speed_std], dtype=np.float64))


def load_checkpoint(path) -> AcitModel:
    root = Path(path)
    if not (root / "index.tsv").is_file() or not (root / "model.cfg").is_file():
        raise CheckpointError(f"no checkpoint at {root}")
    cfg = typed_update(ModelConfig(), parse_kv((root / "model.cfg").read_text()))
    model = AcitModel(cfg)
    state = {}
    for line in (root / "index.tsv").read_text().splitlines():
        if not line.strip():
            continue
        name, rel, _ = line.split("\t")
        if not (root / rel).is_file():
            raise CheckpointError(f"{root / rel}: listed in index.tsv but missing")
        state[name] = tsr.read(root / rel)
    model.load_state(state)
    stats = tsr.read(root / "motion_stats.tsr")
    model.stats = MotionStats(float(stats[0]), float(stats[1]))
    return model
