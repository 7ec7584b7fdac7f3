"""Named random streams.

Every stream is a Philox4x64-10 counter-based generator keyed by
``(seed, crc32(name))``, so a (seed, name) pair reproduces the same
sequence on any platform and streams never share state.
"""

from __future__ import annotations

import zlib

import numpy as np


def make_rng(seed: int, stream: str) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(stream.encode())], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
