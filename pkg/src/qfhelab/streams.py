"""Named random streams derived from one integer seed."""
from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, *names) -> np.random.Generator:
    """Independent generator for the path ``names`` under ``seed``.

    The same (seed, names) always yields the same generator; different names
    give statistically independent streams.
    """
    digest = hashlib.sha256("/".join(str(n) for n in names).encode()).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), *words]))


def rng_of(x) -> np.random.Generator:
    if isinstance(x, np.random.Generator):
        return x
    return np.random.default_rng(x)
