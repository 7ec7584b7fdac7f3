"""Parameter containers and the small dense layers shared by every block."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Tensor, gelu, layer_norm, linear


class Module:
    """Base for parameter holders.

    Trainable tensors and sub-modules are discovered from instance
    attributes in assignment order, which fixes parameter naming and the
    order of the optimizer state.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{full}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True, dtype=dtype)


def zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, dtype=dtype)


def ones(shape, dtype) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True, dtype=dtype)


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, dtype, bias: bool = True):
        self.w = glorot(rng, d_in, d_out, dtype)
        self.b = zeros((d_out,), dtype) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.w, self.b)


class LayerNorm(Module):
    def __init__(self, d: int, dtype, eps: float = 1e-5):
        self.gain = ones((d,), dtype)
        self.bias = zeros((d,), dtype)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


class FeedForward(Module):
    """d -> hidden -> d with GELU."""

    def __init__(self, rng: np.random.Generator, d: int, hidden: int, dtype):
        self.inner = Linear(rng, d, hidden, dtype)
        self.outer = Linear(rng, hidden, d, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(gelu(self.inner(x)))
