import csv
from pathlib import Path

import numpy as np
import pytest

from acit import AcitModel, ModelConfig
from acit.ammi import MotionStats
from acit.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from acit.config import VARIANTS
from acit.model import shape_trace, zero_batch
from acit.tensor import ConfigError
from acit.train import objective

from conftest import grad_error

DOCS = Path(__file__).resolve().parents[1] / "docs"

TINY = dict(channels=4, d_model=8, seq_len=3, grid=2, motion_heads=2, motion_ffn=8,
            tfa_layers=1, tfa_heads=2, tfa_ffn=8, head_hidden=4, dtype="f64")


def tiny_problem(variant="full", seed=0):
    """A reduced f64 model with every parameter nudged off its init, plus a batch of two clips."""
    cfg = ModelConfig(variant=variant, **TINY)
    model = AcitModel(cfg)
    r = np.random.default_rng(seed)
    # zero biases at init make some paths exactly flat; nudging keeps every gradient informative
    for _, p in model.named_parameters():
        p.data[...] = p.data + 0.1 * r.normal(size=p.shape)
    batch = zero_batch(cfg, 2)
    for name in ("lrgb", "lof", "gs", "gof"):
        setattr(batch, name, r.normal(size=getattr(batch, name).shape))
    batch.speed = r.normal(size=batch.speed.shape)
    xy = r.random((2, cfg.seq_len, 2)) * 500
    batch.bbox = np.concatenate([xy, xy + 50 + r.random((2, cfg.seq_len, 2)) * 100], -1)
    batch.labels = np.array([1, 0])
    return model, batch


def full_graph_error(variant="full"):
    model, batch = tiny_problem(variant)
    return grad_error(lambda: objective(model, batch, 1.0, 2.0, 1e-3, False, None), model.parameters())


def test_full_model_gradient():
    assert full_graph_error("full") < 1e-4


@pytest.mark.slow
@pytest.mark.parametrize("variant", [v for v in VARIANTS if v != "full"])
def test_variant_gradients(variant):
    assert full_graph_error(variant) < 1e-4


def test_wide_shape_pipeline():
    model = AcitModel(ModelConfig.wide())
    trace = shape_trace(model)
    assert trace["visual_in"] == (16, 8, 8, 1024)
    assert trace["tokens"] == (64, 256)
    for key in ("F_L", "F_G", "F_M"):
        assert trace[key] == (16, 256)
    assert trace["fused"] == (16, 768)
    assert trace["encoder_input"] == (17, 768)
    assert trace["logit"] == ()


def _evaluate(formula: str) -> int:
    return sum(int(np.prod([int(f) for f in term.split("*")])) for term in formula.split("+"))


def _hand_counts():
    with open(DOCS / "param_count_wide.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    groups: dict[str, int] = {}
    for row in rows[:-1]:
        # the formula column is the oracle; the count column must agree with it
        value = _evaluate(row["formula"])
        assert value == int(row["count"]), row
        groups[row["group"]] = groups.get(row["group"], 0) + value
    assert rows[-1]["group"] == "total" and int(rows[-1]["count"]) == sum(groups.values())
    return groups


def test_wide_parameter_count_matches_layer_sum():
    model = AcitModel(ModelConfig.wide())
    hand = _hand_counts()
    for group, count in hand.items():
        assert getattr(model, group).num_parameters() == count, group
    assert model.num_parameters() == sum(hand.values()) == 14337539


def test_same_config_same_count_and_init():
    a, b = AcitModel(ModelConfig()), AcitModel(ModelConfig())
    assert a.num_parameters() == b.num_parameters()
    assert all(np.array_equal(x, y) for x, y in zip(a.state().values(), b.state().values()))
    c = AcitModel(ModelConfig(seed=1))
    assert any(not np.array_equal(x, y) for x, y in zip(a.state().values(), c.state().values()))


def test_variant_structure():
    counts = {v: AcitModel(ModelConfig(variant=v)).num_parameters() for v in VARIANTS}
    assert counts["v1"] < counts["full"]
    names = [n for n, _ in AcitModel(ModelConfig(variant="v4")).named_parameters()]
    assert not any(n.endswith("alpha") for n in names)
    assert any(n.endswith("alpha") for n, _ in AcitModel(ModelConfig()).named_parameters())


def test_bad_variant_is_config_error():
    with pytest.raises(ConfigError):
        ModelConfig(variant="v6")
    with pytest.raises(ConfigError):
        ModelConfig(d_model=30, motion_heads=4)


@pytest.mark.parametrize("variant", VARIANTS)
def test_predict_proba_in_open_interval(variant, rng):
    model = AcitModel(ModelConfig(variant=variant))
    batch = zero_batch(model.config, 3)
    batch.lrgb = rng.normal(size=batch.lrgb.shape).astype(np.float32)
    p = model.predict_proba(batch)
    assert p.shape == (3,) and np.all((p > 0) & (p < 1))


def test_checkpoint_round_trip(tmp_path, rng):
    model = AcitModel(ModelConfig(variant="v3", seed=7))
    model.stats = MotionStats(12.5, 3.25)
    save_checkpoint(tmp_path / "ck", model)
    back = load_checkpoint(tmp_path / "ck")
    assert back.config == model.config
    assert (back.stats.speed_mean, back.stats.speed_std) == (12.5, 3.25)
    for (n1, a), (n2, b) in zip(model.state().items(), back.state().items()):
        assert n1 == n2 and a.dtype == b.dtype and np.array_equal(a, b)
    batch = zero_batch(model.config, 2)
    batch.gs = rng.normal(size=batch.gs.shape).astype(np.float32)
    assert np.array_equal(model.predict_proba(batch), back.predict_proba(batch))


def test_checkpoint_missing_tensor(tmp_path):
    save_checkpoint(tmp_path / "ck", AcitModel(ModelConfig()))
    next((tmp_path / "ck" / "tensors").iterdir()).unlink()
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "ck")
