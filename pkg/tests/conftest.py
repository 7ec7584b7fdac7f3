import numpy as np
import pytest

from acit.tensor import Tape, Tensor


def param(arr) -> Tensor:
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True, dtype="f64")


def analytic_grads(fn, params):
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    return [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]


def numeric_grad(fn, p: Tensor, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(p.data)
    flat = p.data.reshape(-1)
    out = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn().item()
        flat[i] = orig - h
        down = fn().item()
        flat[i] = orig
        out[i] = (up - down) / (2 * h)
    return g


def grad_error(fn, params, h: float = 1e-5) -> float:
    """Worst relative error over parameters: max|a - n| / max(max|a|, max|n|)."""
    worst = 0.0
    for p, a in zip(params, analytic_grads(fn, params)):
        n = numeric_grad(fn, p, h)
        scale = max(np.abs(a).max(), np.abs(n).max(), 1e-12)
        worst = max(worst, float(np.abs(a - n).max() / scale))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request, capsys):
    """Record and echo one acceptance line; the test still asserts on ``ok``."""
    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash.setdefault(VERDICTS, []).append((n, line))
        with capsys.disabled():
            print(f"\n{line}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
