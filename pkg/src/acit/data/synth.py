"""Procedural pedestrian scenarios rendered into the four visual modalities.

A scenario is one pedestrian track in a 1920x1080 world.  Crossing
pedestrians drift toward the image centre while their box grows;
non-crossing ones walk roughly parallel to the road with a stable box.
The ego vehicle slows for crossers in proportion to ``coupling``.
Frames are rendered procedurally at ``render_res`` and upsampled to the
256x256 frame size, then encoded by a frozen, seeded patch embedding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ammi import FRAME_H, FRAME_W
from ..encoder_stub import MODALITIES, patch_embed
from ..layers import glorot
from ..rng import make_rng
from ..tensor import Tensor

HORIZON_Y = 430.0
ROAD_Y = 640.0
SEMANTIC_PALETTE = np.array([
    [0.55, 0.70, 0.90],  # sky / buildings
    [0.60, 0.55, 0.45],  # sidewalk
    [0.25, 0.25, 0.28],  # road
    [0.95, 0.20, 0.20],  # pedestrian
])


@dataclass(frozen=True)
class SynthParams:
    min_len: int = 16
    max_len: int = 40
    balance: float = 0.5
    coupling: float = 1.0
    noise: float = 0.02
    cross_drift: tuple[float, float] = (3.0, 7.0)
    cross_growth: tuple[float, float] = (0.004, 0.010)
    walk_drift: tuple[float, float] = (0.0, 2.0)
    walk_growth: tuple[float, float] = (-0.002, 0.002)
    channels: int = 64
    frame_size: int = 256
    render_res: int = 64
    grid: int = 8
    encoder_seed: int = 1234


@dataclass
class Scenario:
    seed: int
    length: int
    event_frame: int
    bbox: np.ndarray  # (T, 4) x1, y1, x2, y2 pixels
    speed: np.ndarray  # (T, 1) km/h
    label: int
    intent: float
    phases: np.ndarray = field(repr=False)  # texture phases (3 channels x 3 terms)
    ego_shift: np.ndarray = field(repr=False)  # (T,) cumulative background shift, px


def _clip_box(cx, cy_bottom, h, w):
    x1 = np.clip(cx - w / 2, 0.0, FRAME_W - w)
    y1 = np.clip(cy_bottom - h, 0.0, FRAME_H - h)
    return np.stack([x1, y1, x1 + w, y1 + h], axis=-1)


def generate_scenario(seed: int, params: SynthParams = SynthParams()) -> Scenario:
    rng = make_rng(seed, "scenario")
    length = int(rng.integers(params.min_len, params.max_len + 1))
    intent = float(rng.random())
    label = int(intent < params.balance)
    t = np.arange(length, dtype=np.float64)

    cx0 = rng.uniform(200.0, FRAME_W - 200.0)
    bottom = rng.uniform(ROAD_Y - 40.0, ROAD_Y + 160.0)
    h0 = rng.uniform(90.0, 220.0)
    toward_centre = np.sign(FRAME_W / 2 - cx0) or 1.0
    if label:
        vx = toward_centre * rng.uniform(*params.cross_drift)
        growth = rng.uniform(*params.cross_growth)
    else:
        vx = rng.choice([-1.0, 1.0]) * rng.uniform(*params.walk_drift)
        growth = rng.uniform(*params.walk_growth)
    h = h0 * np.exp(growth * t)
    cx = cx0 + vx * t
    bottom_t = bottom + 0.25 * (h - h0)
    jitter = rng.normal(0.0, params.noise, size=(length, 3)) * h[:, None]
    h_obs = np.maximum(h + jitter[:, 2], 20.0)
    box = _clip_box(cx + jitter[:, 0], bottom_t + jitter[:, 1], h_obs, 0.41 * h_obs)

    base = rng.uniform(15.0, 45.0)
    slowdown = params.coupling * label * rng.uniform(6.0, 14.0)
    decel = rng.uniform(-0.1, 0.1) + params.coupling * label * rng.uniform(0.15, 0.4)
    speed = np.maximum(base - slowdown - decel * t + rng.normal(0.0, 0.5, size=length), 0.0)

    phases = rng.uniform(0.0, 2 * np.pi, size=(3, 3))
    ego_shift = np.cumsum(speed) * 0.5
    return Scenario(seed=seed, length=length, event_frame=length, bbox=box,
                    speed=speed[:, None], label=label, intent=intent, phases=phases,
                    ego_shift=ego_shift)


# rendering ---------------------------------------------------------------

def _texture(x: np.ndarray, y: np.ndarray, phases: np.ndarray) -> np.ndarray:
    chans = []
    for c in range(3):
        p = phases[c]
        v = (0.5 + 0.2 * np.sin(0.011 * x + p[0]) * np.cos(0.017 * y + p[1])
             + 0.1 * np.sin(0.031 * x - 0.007 * y + p[2]))
        chans.append(v)
    img = np.stack(chans, axis=-1)
    road = (y >= ROAD_Y)[..., None]
    return np.where(road, 0.3 + 0.3 * (img - 0.5), img)


def _blob(x: np.ndarray, y: np.ndarray, box: np.ndarray) -> np.ndarray:
    cx, cy = (box[0] + box[2]) / 2, (box[1] + box[3]) / 2
    w, h = box[2] - box[0], box[3] - box[1]
    return np.exp(-((x - cx) / (0.5 * w)) ** 2 - ((y - cy) / (0.5 * h)) ** 2)[..., None]


def _semantic(x: np.ndarray, y: np.ndarray, box: np.ndarray) -> np.ndarray:
    cls = np.where(y < HORIZON_Y, 0, np.where(y < ROAD_Y, 1, 2))
    inside = (x >= box[0]) & (x <= box[2]) & (y >= box[1]) & (y <= box[3])
    return SEMANTIC_PALETTE[np.where(inside, 3, cls)]


def _viewport(res: int, x0: float, y0: float, x1: float, y1: float):
    u = (np.arange(res) + 0.5) / res
    return np.meshgrid(x0 + u * (x1 - x0), y0 + u * (y1 - y0))


def _upsample(img: np.ndarray, size: int) -> np.ndarray:
    t, r, _, c = img.shape
    k = size // r
    return np.broadcast_to(img[:, :, None, :, None, :], (t, r, k, r, k, c)).reshape(t, r * k, r * k, c)


def render_frames(sc: Scenario, params: SynthParams = SynthParams(),
                  upsample: bool = True) -> dict[str, np.ndarray]:
    """All four modalities as (T, S, S, 3) float32 frames in [0, 1].

    With ``upsample=False`` the frames stay at ``render_res``.
    """
    res = params.render_res
    gx, gy = _viewport(res, 0.0, 0.0, FRAME_W, FRAME_H)
    glob, sem, loc = [], [], []
    for t in range(sc.length):
        box = sc.bbox[t]
        shift = sc.ego_shift[t]
        blob = _blob(gx, gy, box)
        glob.append(_texture(gx + shift, gy, sc.phases) * (1 - blob) + blob * np.array([1.0, 0.9, 0.6]))
        sem.append(_semantic(gx, gy, box))
        cx, cy = (box[0] + box[2]) / 2, (box[1] + box[3]) / 2
        half = box[3] - box[1]
        lx, ly = _viewport(res, cx - half, cy - half, cx + half, cy + half)
        lblob = _blob(lx, ly, box)
        loc.append(_texture(lx + shift, ly, sc.phases) * (1 - lblob) + lblob * np.array([1.0, 0.9, 0.6]))
    glob, sem, loc = (np.asarray(a) for a in (glob, sem, loc))

    def flow(frames):
        diff = np.zeros_like(frames)
        diff[1:] = frames[1:] - frames[:-1]
        return np.clip(0.5 + 2.0 * diff, 0.0, 1.0)

    out = {"lrgb": loc, "lof": flow(loc), "gs": sem, "gof": flow(glob)}
    out = {k: v.astype(np.float32) for k, v in out.items()}
    if not upsample:
        return out
    return {k: _upsample(v, params.frame_size) for k, v in out.items()}


_EMBEDDINGS: dict[tuple, tuple[Tensor, Tensor]] = {}


def frozen_embedding(params: SynthParams) -> tuple[Tensor, Tensor]:
    """Fixed projection standing in for a pretrained backbone."""
    patch = params.frame_size // params.grid
    key = (params.encoder_seed, params.channels, patch)
    if key not in _EMBEDDINGS:
        rng = make_rng(params.encoder_seed, "synth-encoder")
        w = glorot(rng, patch * patch * 3, params.channels, np.float32)
        w.requires_grad = False
        b = Tensor(np.zeros(params.channels), dtype=np.float32)
        _EMBEDDINGS[key] = (w, b)
    return _EMBEDDINGS[key]


def _folded_weight(w: np.ndarray, params: SynthParams) -> np.ndarray:
    """Patch weights acting on the coarse render.

    Upsampling replicates each coarse pixel into a k x k block, so summing
    the corresponding weight rows gives the identical projection.
    """
    patch = params.frame_size // params.grid
    k = params.frame_size // params.render_res
    cp = patch // k
    return w.reshape(cp, k, cp, k, 3, -1).sum(axis=(1, 3)).reshape(cp * cp * 3, -1)


def scenario_features(sc: Scenario, params: SynthParams = SynthParams()) -> dict[str, np.ndarray]:
    """(T, grid, grid, C) float32 feature maps per modality.

    Equal to ``patch_embed`` over the full-size frames (checked in the tests),
    evaluated on the coarse render for speed.
    """
    w, b = frozen_embedding(params)
    wf = _folded_weight(w.data, params)
    frames = render_frames(sc, params, upsample=False)
    g = params.grid
    out = {}
    for m in MODALITIES:
        f = frames[m]
        t, r = f.shape[:2]
        cp = r // g
        patches = f.reshape(t, g, cp, g, cp, 3).transpose(0, 1, 3, 2, 4, 5).reshape(t, g, g, -1)
        out[m] = (patches @ wf + b.data).astype(np.float32)
    return out
