import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acit import tensor as T
from acit.attention import positional_encoding
from acit.avmi import (DualPathParams, PooledVisualParams, avmi_forward, dual_path, pool_pair,
                       pooled_visual_forward, reduce_channels, tokenize)
from acit.config import ModelConfig
from acit.model import AcitModel, zero_batch
from acit.tensor import ConfigError, DimensionError, Tensor

import oracles
from conftest import grad_error, param


def _params(rng, channels=6, d=4, alpha=0.0):
    p = DualPathParams(rng, channels, d, np.float64)
    for layer in (p.reduce_primary, p.reduce_aux):
        layer.b.data[:] = rng.normal(size=d) * 0.1
    p.alpha.data[...] = alpha
    return p


def test_reduce_channels_cases(rng):
    fmap = rng.normal(size=(2, 8, 8, 6))
    assert np.array_equal(reduce_channels(Tensor(fmap), Tensor(np.eye(6))).data, fmap)
    w = Tensor(rng.normal(size=(6, 4)))
    assert not reduce_channels(Tensor(np.zeros((2, 8, 8, 6))), w).data.any()
    out = reduce_channels(Tensor(fmap), w).data
    assert np.array_equal(out[1, 3, 5], fmap[1, 3, 5] @ w.data)
    with pytest.raises(DimensionError):
        reduce_channels(Tensor(fmap), Tensor(np.ones((5, 4))))


def test_reduce_channels_wide_identity(rng):
    fmap = rng.normal(size=(1, 8, 8, 256))
    assert np.array_equal(reduce_channels(Tensor(fmap), Tensor(np.eye(256))).data, fmap)


def test_tokenize_zero_map_is_pe():
    out = tokenize(Tensor(np.zeros((8, 8, 6)))).data
    assert np.array_equal(out, positional_encoding(64, 6).data)


def test_tokenize_one_hot_probe():
    for r, c in [(0, 0), (2, 5), (7, 7), (5, 2)]:
        grid = np.zeros((8, 8, 4))
        grid[r, c] = 1.0
        tokens = tokenize(Tensor(grid), use_pe=False).data
        assert np.flatnonzero(tokens.any(axis=-1)).tolist() == [8 * r + c]


def test_tokenize_subtract_pe(rng):
    grid = rng.normal(size=(3, 8, 8, 6))
    flat, pe = grid.reshape(3, 64, 6), positional_encoding(64, 6).data
    tokens = tokenize(Tensor(grid)).data
    # the table enters by a single addition, so removing it is exact up to that rounding
    assert np.array_equal(tokens, flat + pe)
    assert np.abs((tokens - pe) - flat).max() <= np.finfo(np.float64).eps * 4
    assert np.array_equal(tokenize(Tensor(grid), use_pe=False).data, flat)


def test_tokenize_needs_square_grid():
    with pytest.raises(DimensionError):
        tokenize(Tensor(np.zeros((4, 8, 6))))


def _sa_only(x, p):
    sa, _ = oracles.sdpa(x @ p.sa.w_q.data, x @ p.sa.w_k.data, x @ p.sa.w_v.data)
    return x + np.array(sa)


def test_gate_off_equals_self_path(rng):
    p = _params(rng)
    x, a = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
    out = dual_path(Tensor(x), Tensor(a), p).data
    sa = T.add(Tensor(x), T.matmul(T.softmax_last(T.scale(T.matmul(
        T.linear(Tensor(x), p.sa.w_q), T.swap_last(T.linear(Tensor(x), p.sa.w_k))), 0.5)),
        T.linear(Tensor(x), p.sa.w_v))).data
    assert np.array_equal(out, sa)


def test_zero_value_projections_return_input(rng):
    p = _params(rng, alpha=1.3)
    p.sa.w_v.data[:] = 0
    p.ga.w_v.data[:] = 0
    x, a = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
    assert np.array_equal(dual_path(Tensor(x), Tensor(a), p).data, x)


def test_dual_path_hand_oracle(rng):
    p = _params(rng, alpha=0.8)
    x, a = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
    x_res = _sa_only(x, p)
    ga, _ = oracles.sdpa(x @ p.ga.w_q.data, a @ p.ga.w_k.data, a @ p.ga.w_v.data)
    ref = x_res + 0.8 * np.array(ga)
    assert np.abs(dual_path(Tensor(x), Tensor(a), p).data - ref).max() < 1e-9


def test_pool_pair_cases(rng):
    v = rng.normal(size=5)
    const = np.broadcast_to(v, (3, 64, 5))
    assert np.allclose(pool_pair(Tensor(const)).data, np.broadcast_to(v, (3, 5)), atol=1e-15)
    one_hot = np.zeros((1, 64, 5))
    one_hot[0, 17] = v
    assert np.allclose(pool_pair(Tensor(one_hot)).data[0], v / 64, rtol=1e-15)
    x = rng.normal(size=(4, 64, 5))
    ref = np.array([[sum(x[n, t, c] for t in range(64)) / 64 for c in range(5)] for n in range(4)])
    assert np.abs(pool_pair(Tensor(x)).data - ref).max() < 1e-12


def test_zero_inputs_zero_projections_give_pooled_pe(rng):
    p = _params(rng, alpha=0.5)
    for tensor in p.parameters():
        if tensor is not p.alpha:
            tensor.data[:] = 0
    out = avmi_forward(Tensor(np.zeros((3, 8, 8, 6))), Tensor(np.zeros((3, 8, 8, 6))), p).data
    pe_mean = positional_encoding(64, 4).data.mean(axis=0)
    assert np.allclose(out, np.broadcast_to(pe_mean, (3, 4)), atol=1e-15)


def test_v4_equal_maps_double_gap(rng):
    p = PooledVisualParams(rng, 6, 4, np.float64)
    p.reduce_aux.w.data[:] = p.reduce_primary.w.data
    m = rng.normal(size=(16, 8, 8, 6))
    out = pooled_visual_forward(Tensor(m), Tensor(m), p).data
    gap = (m @ p.reduce_primary.w.data + p.reduce_primary.b.data).reshape(16, 64, 4).mean(axis=1)
    assert np.allclose(out, 2 * gap, atol=1e-12)
    assert out.shape == (16, 4)


def test_avmi_shapes_any_channels(rng):
    for c in (3, 64, 1024):
        p = DualPathParams(rng, c, 8, np.float32)
        out = avmi_forward(Tensor(np.zeros((16, 8, 8, c)), dtype="f32"),
                           Tensor(np.zeros((16, 8, 8, c)), dtype="f32"), p)
        assert out.shape == (16, 8)


def test_pair_mismatch_is_config_error(rng):
    p = _params(rng)
    with pytest.raises(ConfigError):
        avmi_forward(Tensor(np.zeros((3, 8, 8, 6))), Tensor(np.zeros((3, 8, 8, 5))), p)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gate_off_ignores_aux(seed):
    r = np.random.default_rng(seed)
    p = _params(np.random.default_rng(5))
    x = r.normal(size=(2, 2, 2, 6))
    base = avmi_forward(Tensor(x), Tensor(r.normal(size=(2, 2, 2, 6))), p).data
    other = avmi_forward(Tensor(x), Tensor(r.normal(size=(2, 2, 2, 6)) * 100), p).data
    assert np.array_equal(base, other)


def test_gate_on_uses_aux(rng):
    p = _params(rng, alpha=0.5)
    x = rng.normal(size=(2, 2, 2, 6))
    base = avmi_forward(Tensor(x), Tensor(rng.normal(size=x.shape)), p).data
    other = avmi_forward(Tensor(x), Tensor(rng.normal(size=x.shape)), p).data
    assert not np.array_equal(base, other)


def test_alpha_gradient(rng):
    p = _params(rng, alpha=0.3)
    p.alpha.requires_grad = True
    x, a = rng.normal(size=(2, 2, 2, 6)), rng.normal(size=(2, 2, 2, 6))
    w = Tensor(rng.normal(size=(2, 4)))
    fn = lambda: T.sum_all(T.mul(avmi_forward(Tensor(x), Tensor(a), p), w))
    assert grad_error(fn, [p.alpha]) < 1e-5


def test_dual_path_gradient_all_inputs(rng):
    p = _params(rng, alpha=0.6)
    x, a = param(rng.normal(size=(4, 4))), param(rng.normal(size=(4, 4)))
    w = Tensor(rng.normal(size=(4, 4)))
    fn = lambda: T.sum_all(T.mul(dual_path(x, a, p), w))
    assert grad_error(fn, [x, a, *p.parameters()]) < 1e-5


def test_avmi_forward_gradient(rng):
    p = _params(rng, alpha=0.6)
    x, a = param(rng.normal(size=(2, 2, 2, 6))), param(rng.normal(size=(2, 2, 2, 6)))
    w = Tensor(rng.normal(size=(2, 4)))
    fn = lambda: T.sum_all(T.mul(avmi_forward(x, a, p), w))
    assert grad_error(fn, [x, a, *p.parameters()]) < 1e-5


def test_local_and_global_share_nothing():
    model = AcitModel(ModelConfig(dtype="f64", channels=8, d_model=12, tfa_heads=4, motion_heads=4))
    local_ids = {id(t) for t in model.local.parameters()}
    assert local_ids.isdisjoint(id(t) for t in model.global_.parameters())
    batch = zero_batch(model.config, 1)
    r = np.random.default_rng(0)
    for name in ("lrgb", "lof", "gs", "gof"):
        setattr(batch, name, r.normal(size=getattr(batch, name).shape))
    before = avmi_forward(Tensor(batch.gs), Tensor(batch.gof), model.global_).data
    for t in model.local.parameters():
        t.data += 1.0
    after = avmi_forward(Tensor(batch.gs), Tensor(batch.gof), model.global_).data
    assert np.array_equal(before, after)
