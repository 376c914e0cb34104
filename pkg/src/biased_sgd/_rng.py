"""Counter-based RNG streams (Philox) keyed per experiment component.

Every random quantity in the library is drawn from a stream created here, so
that a (seed, path...) pair fully determines the byte content of any output.
"""

from __future__ import annotations

import numpy as np

_MIX = np.uint64(0x9E3779B97F4A7C15)


def _mix64(h: int, v: int) -> int:
    # splitmix64 finalizer, folds one path component into the running key word
    z = (h + int(_MIX) + v) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def stream(seed: int, *path: int) -> np.random.Generator:
    """Independent Philox stream for (seed, path).

    `path` components separate repetitions, sweep cells, estimator points and
    so on; distinct paths give statistically independent, reproducible streams.
    """
    word = 0
    for component in path:
        word = _mix64(word, int(component))
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, word], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
