import numpy as np
import pytest

from acit import tensor as T
from acit.ammi import (FRAME_H, FRAME_W, MotionParams, MotionStats, ValidationError, ammi_forward,
                       check_bbox, cross_modal_block, embed_motion, motion_branches,
                       normalize_motion)
from acit.tensor import Tensor

import oracles
from conftest import analytic_grads, grad_error, param


def _params(rng, d=8, heads=2, hidden=16):
    p = MotionParams(rng, d, heads, hidden, np.float64)
    # non-trivial affine parts so the probes exercise every term
    for ln in (p.norm_speed, p.norm_bbox, p.norm_merge):
        ln.gain.data[:] = 1 + 0.2 * rng.normal(size=d)
        ln.bias.data[:] = 0.1 * rng.normal(size=d)
    return p


def _boxes(rng, n):
    xy = rng.random((n, 2)) * 0.6
    wh = 0.05 + rng.random((n, 2)) * 0.3
    return np.concatenate([xy, xy + wh], axis=-1)


def test_embed_zero_inputs():
    p = MotionParams(np.random.default_rng(0), 8, 2, 16, np.float64)
    x_s, x_b = embed_motion(Tensor(np.zeros((16, 1))), Tensor(np.zeros((16, 4))), p)
    assert not x_s.data.any() and not x_b.data.any()


def test_constant_speed_rows_identical(rng):
    p = _params(rng)
    x_s, _ = embed_motion(Tensor(np.full((16, 1), 0.7)), Tensor(_boxes(rng, 16)), p)
    assert all(np.array_equal(x_s.data[0], x_s.data[i]) for i in range(16))


def test_embed_composition_oracle(rng):
    p = _params(rng)
    speed, bbox = rng.normal(size=(5, 1)), _boxes(rng, 5)
    x_s, x_b = embed_motion(Tensor(speed), Tensor(bbox), p)
    for i in range(5):
        hs = [speed[i, 0] * p.embed_speed.w.data[0, c] + p.embed_speed.b.data[c] for c in range(8)]
        hb = [sum(bbox[i, r] * p.embed_bbox.w.data[r, c] for r in range(4)) + p.embed_bbox.b.data[c]
              for c in range(8)]
        ref_s = oracles.layer_norm(hs, p.norm_speed.gain.data, p.norm_speed.bias.data)
        ref_b = oracles.layer_norm(hb, p.norm_bbox.gain.data, p.norm_bbox.bias.data)
        assert np.abs(x_s.data[i] - ref_s).max() < 1e-9
        assert np.abs(x_b.data[i] - ref_b).max() < 1e-9


def test_zeroed_attention_reduces_to_ffn_residual(rng):
    p = _params(rng)
    for att in (p.att_speed, p.att_bbox):
        att.w_v.data[:] = 0
        att.w_o.data[:] = 0
    x_s, x_b = rng.normal(size=(6, 8)), rng.normal(size=(6, 8))
    out = cross_modal_block(Tensor(x_s), Tensor(x_b), p).data
    ffn = p.ffn
    for i in range(6):
        n = oracles.layer_norm(list(x_s[i] + x_b[i]), p.norm_merge.gain.data, p.norm_merge.bias.data)
        h = [oracles.gelu(sum(n[r] * ffn.inner.w.data[r, c] for r in range(8)) + ffn.inner.b.data[c])
             for c in range(16)]
        f = [sum(h[r] * ffn.outer.w.data[r, c] for r in range(16)) + ffn.outer.b.data[c]
             for c in range(8)]
        assert np.abs(out[i] - (np.array(f) + n)).max() < 1e-9


def test_mirrored_parameters_mirror_branches(rng):
    p = _params(rng)
    x_s, x_b = Tensor(rng.normal(size=(6, 8))), Tensor(rng.normal(size=(6, 8)))
    sb, bs = motion_branches(x_s, x_b, p)
    p.att_speed, p.att_bbox = p.att_bbox, p.att_speed
    bs2, sb2 = motion_branches(x_b, x_s, p)
    assert np.array_equal(sb.data, sb2.data) and np.array_equal(bs.data, bs2.data)


@pytest.mark.parametrize("cross", [True, False])
def test_bbox_perturbation_reaches_speed_branch_only_when_cross(rng, cross):
    p = _params(rng)
    x_s = Tensor(rng.normal(size=(16, 8)))
    x_b = rng.normal(size=(16, 8))
    sb, _ = motion_branches(x_s, Tensor(x_b), p, cross=cross)
    sb2, _ = motion_branches(x_s, Tensor(x_b + rng.normal(size=x_b.shape)), p, cross=cross)
    assert np.array_equal(sb.data, sb2.data) is (not cross)
    zeroed, _ = motion_branches(x_s, Tensor(np.zeros_like(x_b)), p, cross=cross)
    assert np.array_equal(sb.data, zeroed.data) is (not cross)


@pytest.mark.parametrize("cross", [True, False])
def test_shape_contract(rng, cross):
    p = MotionParams(rng, 256, 4, 512, np.float32)
    out = ammi_forward(Tensor(rng.normal(size=(16, 1)), dtype="f32"),
                       Tensor(_boxes(rng, 16), dtype="f32"), p, cross=cross)
    assert out.shape == (16, 256)


def test_every_parameter_gets_gradient(rng):
    p = _params(rng)
    speed, bbox = rng.normal(size=(2, 16, 1)), np.stack([_boxes(rng, 16), _boxes(rng, 16)])
    w = Tensor(rng.normal(size=(2, 16, 8)))
    fn = lambda: T.sum_all(T.mul(ammi_forward(Tensor(speed), Tensor(bbox), p), w))
    for (name, _), g in zip(p.named_parameters(), analytic_grads(fn, p.parameters())):
        assert np.linalg.norm(g) > 0, name


@pytest.mark.parametrize("cross", [True, False])
def test_cross_modal_block_gradient(rng, cross):
    p = _params(rng)
    x_s, x_b = param(rng.normal(size=(3, 8))), param(rng.normal(size=(3, 8)))
    w = Tensor(rng.normal(size=(3, 8)))
    fn = lambda: T.sum_all(T.mul(cross_modal_block(x_s, x_b, p, cross=cross), w))
    assert grad_error(fn, [x_s, x_b, *p.parameters()]) < 1e-5


def test_ammi_forward_gradient(rng):
    p = _params(rng)
    speed, bbox = param(rng.normal(size=(3, 1))), param(_boxes(rng, 3))
    w = Tensor(rng.normal(size=(3, 8)))
    fn = lambda: T.sum_all(T.mul(ammi_forward(speed, bbox, p), w))
    assert grad_error(fn, [speed, bbox, *p.parameters()]) < 1e-5


def test_dropout_only_in_training(rng):
    p = _params(rng)
    x_s, x_b = Tensor(rng.normal(size=(16, 8))), Tensor(rng.normal(size=(16, 8)))
    a = cross_modal_block(x_s, x_b, p, dropout_p=0.1, training=False).data
    b = cross_modal_block(x_s, x_b, p, dropout_p=0.0).data
    c = cross_modal_block(x_s, x_b, p, dropout_p=0.1, training=True, rng=np.random.default_rng(0)).data
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_normalize_motion():
    stats = MotionStats.fit(np.array([1.0, 3.0]))
    assert (stats.speed_mean, stats.speed_std) == (2.0, 1.0)
    assert MotionStats.fit(np.ones(4)).speed_std == 1.0
    box = np.array([[0.0, 0.0, FRAME_W, FRAME_H]])
    speed, norm = normalize_motion(np.array([[3.0]]), box, stats)
    assert speed[0, 0] == 1.0 and np.array_equal(norm, [[0.0, 0.0, 1.0, 1.0]])


def test_bad_boxes_rejected():
    with pytest.raises(ValidationError):
        check_bbox(np.array([[10.0, 0.0, 5.0, 4.0]]))
    with pytest.raises(ValidationError):
        embed_motion(Tensor(np.zeros((1, 1))), Tensor([[0.0, 9.0, 1.0, 3.0]]),
                     MotionParams(np.random.default_rng(0), 8, 2, 16, np.float64))
