"""Dataset manifests and the on-disk dataset layout.

``<root>/manifest.tsv`` holds one clip per line, tab separated, with a
header naming the columns in this order::

    clip_id  split  scenario_id  start  event_frame  label  source  speed  bbox

``source`` is the clip directory relative to the root
(``<split>/<clip_id>``, holding ``lrgb.tsr lof.tsr gs.tsr gof.tsr``) or
``seed:<n>`` for clips that are regenerated from the synthetic generator.
``speed`` lists 16 numbers and ``bbox`` 64 numbers (16 x [x1,y1,x2,y2]),
comma separated, written with shortest round-trip float formatting.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..encoder_stub import MODALITIES, load_features, write_features
from .clips import CLIP_LEN, ClipDataset, ClipSample, extract_clips
from .synth import SynthParams, generate_scenario, scenario_features

COLUMNS = ("clip_id", "split", "scenario_id", "start", "event_frame", "label", "source", "speed", "bbox")
SPLITS = ("train", "val", "test")
MANIFEST_NAME = "manifest.tsv"


class ManifestError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        where = f"{path}:" if path is not None else ""
        where += f"{line}: " if line is not None else (" " if where else "")
        super().__init__(f"{where}{message}")
        self.line = line


@dataclass
class ClipRecord:
    clip_id: str
    split: str
    scenario_id: int
    start: int
    event_frame: int
    label: int
    source: str
    speed: np.ndarray  # (16, 1)
    bbox: np.ndarray  # (16, 4)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClipRecord):
            return NotImplemented
        scalars = ("clip_id", "split", "scenario_id", "start", "event_frame", "label", "source")
        return (all(getattr(self, k) == getattr(other, k) for k in scalars)
                and np.array_equal(self.speed, other.speed) and np.array_equal(self.bbox, other.bbox))


@dataclass
class DatasetManifest:
    records: list[ClipRecord] = field(default_factory=list)

    def split(self, name: str) -> list[ClipRecord]:
        return [r for r in self.records if r.split == name]

    def validate(self) -> None:
        seen: set[str] = set()
        owner: dict[int, str] = {}
        for r in self.records:
            if r.split not in SPLITS:
                raise ManifestError(f"unknown split {r.split!r} for clip {r.clip_id}")
            if r.clip_id in seen:
                raise ManifestError(f"duplicate clip id {r.clip_id}")
            seen.add(r.clip_id)
            prev = owner.setdefault(r.scenario_id, r.split)
            if prev != r.split:
                raise ManifestError(f"scenario {r.scenario_id} appears in both {prev} and {r.split}")
        for name in SPLITS:
            if not self.split(name):
                warnings.warn(f"manifest split {name!r} is empty")


def _floats(arr: np.ndarray) -> str:
    return ",".join(repr(float(x)) for x in np.asarray(arr).ravel())


def write_manifest(path, manifest: DatasetManifest) -> None:
    manifest.validate()
    lines = ["\t".join(COLUMNS)]
    for r in manifest.records:
        lines.append("\t".join([r.clip_id, r.split, str(r.scenario_id), str(r.start),
                                str(r.event_frame), str(r.label), r.source,
                                _floats(r.speed), _floats(r.bbox)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse(fields_: list[str], lineno: int, path) -> ClipRecord:
    if len(fields_) != len(COLUMNS):
        raise ManifestError(f"expected {len(COLUMNS)} fields, got {len(fields_)}", lineno, path)
    row = dict(zip(COLUMNS, fields_))
    try:
        speed = np.array([float(x) for x in row["speed"].split(",")], dtype=np.float64)
        bbox = np.array([float(x) for x in row["bbox"].split(",")], dtype=np.float64)
        rec = ClipRecord(row["clip_id"], row["split"], int(row["scenario_id"]), int(row["start"]),
                         int(row["event_frame"]), int(row["label"]), row["source"],
                         speed.reshape(CLIP_LEN, 1), bbox.reshape(CLIP_LEN, 4))
    except ValueError as exc:
        raise ManifestError(f"malformed field: {exc}", lineno, path) from exc
    if rec.label not in (0, 1):
        raise ManifestError(f"label must be 0 or 1, got {rec.label}", lineno, path)
    return rec


def read_manifest(path) -> DatasetManifest:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if not lines or lines[0].split("\t") != list(COLUMNS):
        raise ManifestError("missing or wrong header", 1, path)
    records = [_parse(line.split("\t"), i, path)
               for i, line in enumerate(lines[1:], start=2) if line.strip()]
    manifest = DatasetManifest(records)
    manifest.validate()
    return manifest


def record_for(clip: ClipSample, split: str, source: str | None = None) -> ClipRecord:
    return ClipRecord(clip.clip_id, split, clip.scenario_id, clip.start, clip.event_frame, clip.label,
                      source if source is not None else f"{split}/{clip.clip_id}",
                      np.asarray(clip.speed, dtype=np.float64), np.asarray(clip.bbox, dtype=np.float64))


def write_dataset(root, splits: dict[str, ClipDataset]) -> DatasetManifest:
    """Write TSR feature files per clip plus the root manifest."""
    root = Path(root)
    records = []
    for split in SPLITS:
        for clip in splits.get(split, ClipDataset([])).clips:
            rec = record_for(clip, split)
            clip_dir = root / rec.source
            clip_dir.mkdir(parents=True, exist_ok=True)
            for m in MODALITIES:
                write_features(clip_dir / f"{m}.tsr", clip.visual[m])
            records.append(rec)
    manifest = DatasetManifest(records)
    write_manifest(root / MANIFEST_NAME, manifest)
    return manifest


def load_clip(root, rec: ClipRecord, channels: int | None = None,
              params: SynthParams = SynthParams()) -> ClipSample:
    if rec.source.startswith("seed:"):
        sc = generate_scenario(int(rec.source[5:]), params)
        for clip in extract_clips(sc, scenario_features(sc, params)):
            if clip.start == rec.start:
                return clip
        raise ManifestError(f"clip {rec.clip_id}: no window starts at frame {rec.start}")
    clip_dir = Path(root) / rec.source
    visual = {m: load_features(clip_dir / f"{m}.tsr", m, CLIP_LEN, channels=channels).data
              for m in MODALITIES}
    return ClipSample(rec.clip_id, rec.scenario_id, rec.start, rec.event_frame, rec.label,
                      rec.speed, rec.bbox, visual)


def load_split(root, split: str, channels: int | None = None) -> ClipDataset:
    manifest = read_manifest(Path(root) / MANIFEST_NAME)
    return ClipDataset([load_clip(root, r, channels) for r in manifest.split(split)])
