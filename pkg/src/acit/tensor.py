"""Dense tensors with tape-based reverse-mode differentiation.

Only the operations the model graph needs are provided. Shapes must agree
exactly, except that an operand may omit leading batch axes (a weight
matrix against a batch of rows, a scalar gate against a token block).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

DTYPES = {"f32": np.float32, "f64": np.float64}

_CHECK_FINITE = True


class DimensionError(ValueError):
    """Operand extents are incompatible."""


class ContractError(ValueError):
    """A precondition other than a shape mismatch was violated."""


class ConfigError(ValueError):
    """An architecture or training setting is invalid."""


class NumericError(FloatingPointError):
    """A forward value became NaN or infinite."""


def set_finite_checks(enabled: bool) -> bool:
    global _CHECK_FINITE
    previous, _CHECK_FINITE = _CHECK_FINITE, enabled
    return previous


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            arr = np.asarray(data)
            dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float64
        elif isinstance(dtype, str):
            dtype = DTYPES[dtype]
        self.data = np.asarray(data, dtype=dtype, order="C")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)


@dataclass
class TapeEntry:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Records differentiable ops executed while the tape is active.

    Use as a context manager; ops only record when at least one input
    requires a gradient.
    """

    entries: list[TapeEntry] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def record(self, entry: TapeEntry) -> None:
        self.entries.append(entry)

    def backward(self, loss: Tensor) -> None:
        backward(loss, self)


_ACTIVE: list[Tape] = []


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf on the tape."""
    if loss.data.size != 1 or loss.ndim > 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    produced = {id(e.output) for e in tape.entries}
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for entry in reversed(tape.entries):
        g_out = grads.pop(id(entry.output), None)
        if g_out is None:
            continue
        for inp, g in zip(entry.inputs, entry.backward(g_out)):
            if g is None or not inp.requires_grad:
                continue
            key = id(inp)
            grads[key] = grads[key] + g if key in grads else g
    leaves: dict[int, Tensor] = {}
    for entry in tape.entries:
        for inp in entry.inputs:
            if inp.requires_grad and id(inp) not in produced:
                leaves[id(inp)] = inp
    if loss.requires_grad and id(loss) not in produced:
        leaves[id(loss)] = loss
    for key, leaf in leaves.items():
        g = grads.get(key)
        if g is None:
            continue
        g = np.asarray(g, dtype=leaf.dtype).reshape(leaf.shape)
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


def _finish(op: str, out: np.ndarray, inputs: tuple[Tensor, ...], bwd) -> Tensor:
    if _CHECK_FINITE and not np.isfinite(out).all():
        raise NumericError(f"{op} produced non-finite values")
    needs = any(t.requires_grad for t in inputs)
    result = Tensor(out, requires_grad=needs, dtype=out.dtype)
    if needs and _ACTIVE:
        _ACTIVE[-1].record(TapeEntry(op, inputs, result, bwd))
    return result


def _check_suffix(a: tuple, b: tuple, op: str) -> None:
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    if long_[len(long_) - len(short):] != short:
        raise DimensionError(f"{op}: shapes {a} and {b} do not align")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g


# elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_suffix(a.shape, b.shape, "add")
    sa, sb = a.shape, b.shape
    return _finish("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_suffix(a.shape, b.shape, "sub")
    sa, sb = a.shape, b.shape
    return _finish("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_suffix(a.shape, b.shape, "mul")
    ad, bd = a.data, b.data
    def bwd(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _finish("mul", ad * bd, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    return _finish("scale", a.data * a.dtype.type(c), (a,), lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _finish("relu", np.where(mask, a.data, 0).astype(a.dtype), (a,),
                   lambda g: (g * mask,))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf) GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = (x * cdf).astype(a.dtype)

    def bwd(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return ((g * (cdf + x * pdf)).astype(a.dtype),)

    return _finish("gelu", out, (a,), bwd)


def dropout(a: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity outside training or when p == 0."""
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ContractError("dropout in training mode needs an rng")
    keep = (rng.random(a.shape) >= p).astype(a.dtype) * a.dtype.type(1.0 / (1.0 - p))
    return _finish("dropout", a.data * keep, (a,), lambda g: (g * keep,))


# linear algebra -------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    ba, bb = a.shape[:-2], b.shape[:-2]
    if ba and bb and ba != bb:
        raise DimensionError(f"matmul batch extents differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bwd(g):
        ga = gb = None
        if a.requires_grad:
            ga = g @ np.swapaxes(bd, -1, -2)
            if not ba and bb:
                ga = ga.reshape(-1, *a.shape).sum(axis=0)
        if b.requires_grad:
            if not bb and ba:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.swapaxes(ad, -1, -2) @ g
                if not bb:
                    gb = gb.reshape(-1, *b.shape).sum(axis=0)
        return ga, gb

    return _finish("matmul", ad @ bd, (a, b), bwd)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise DimensionError(f"linear: bias {b.shape} does not match weight {w.shape}")
    lead = x.shape[:-1]
    xd = x.data.reshape(-1, x.shape[-1])
    out = xd @ w.data
    if b is not None:
        out = out + b.data
    out = out.reshape(*lead, w.shape[1])

    def bwd(g):
        g2 = g.reshape(-1, w.shape[1])
        gx = (g2 @ w.data.T).reshape(x.shape) if x.requires_grad else None
        gw = xd.T @ g2 if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    inputs = (x, w) if b is None else (x, w, b)
    return _finish("linear", out, inputs, bwd)


# shape ops -----------------------------------------------------------------

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    return _finish("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _finish("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def swap_last(a: Tensor) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def index(a: Tensor, key) -> Tensor:
    """Basic (slice/int) indexing."""
    src_shape, dtype = a.shape, a.dtype

    def bwd(g):
        full = np.zeros(src_shape, dtype=dtype)
        full[key] = g
        return (full,)

    return _finish("index", np.array(a.data[key], order="C"), (a,), bwd)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or t.shape[:ax] + t.shape[ax + 1:] != ref[:ax] + ref[ax + 1:]:
            raise DimensionError(f"concat: {t.shape} incompatible with {ref} on axis {axis}")
    splits = np.cumsum([t.shape[ax] for t in tensors])[:-1]
    return _finish("concat", np.concatenate([t.data for t in tensors], axis=ax), tensors,
                   lambda g: tuple(np.split(g, splits, axis=ax)))


def expand(a: Tensor, lead: Sequence[int]) -> Tensor:
    """Repeat ``a`` over new leading axes."""
    lead = tuple(lead)
    out = np.broadcast_to(a.data, lead + a.shape).copy()
    return _finish("expand", out, (a,), lambda g: (_unbroadcast(g, a.shape),))


# reductions ------------------------------------------------------------------

def sum_all(a: Tensor) -> Tensor:
    return _finish("sum_all", np.asarray(a.data.sum(), dtype=a.dtype), (a,),
                   lambda g: (np.broadcast_to(g, a.shape).astype(a.dtype),))


def mean(a: Tensor, axis: int) -> Tensor:
    ax = axis % a.ndim
    n = a.shape[ax]

    def bwd(g):
        return (np.broadcast_to(np.expand_dims(g, ax) / n, a.shape).astype(a.dtype),)

    return _finish("mean", a.data.mean(axis=ax, dtype=a.dtype), (a,), bwd)


# normalisation -----------------------------------------------------------------

def softmax_last(x: Tensor) -> Tensor:
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError(f"softmax over an empty last axis: {x.shape}")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _finish("softmax", y, (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if d < 2:
        raise DimensionError(f"layer_norm needs at least 2 features, got {x.shape}")
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm: gain {gain.shape}/bias {bias.shape} vs input {x.shape}")
    if eps <= 0:
        raise ContractError("layer_norm eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def bwd(g):
        lead = tuple(range(g.ndim - 1))
        gxhat = g * gain.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _finish("layer_norm", out.astype(x.dtype), (x, gain, bias), bwd)


# loss ------------------------------------------------------------------------

def bce_with_logits(logits: Tensor, labels, weights) -> Tensor:
    """Mean of ``w * (softplus(z) - y*z)`` over all elements.

    Evaluated as ``y*softplus(-z) + (1-y)*softplus(z)``, which avoids the
    cancellation of the direct form for large positive logits.
    """
    z = logits.data
    y = np.asarray(labels, dtype=z.dtype).reshape(z.shape)
    w = np.broadcast_to(np.asarray(weights, dtype=z.dtype), z.shape)
    n = max(z.size, 1)
    tail = np.log1p(np.exp(-np.abs(z)))
    per = y * (np.maximum(-z, 0) + tail) + (1 - y) * (np.maximum(z, 0) + tail)
    loss = np.asarray((w * per).sum() / n, dtype=z.dtype)

    def bwd(g):
        sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                       np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
        return ((g * w * (sig - y) / n).astype(z.dtype),)

    return _finish("bce_with_logits", loss, (logits,), bwd)
