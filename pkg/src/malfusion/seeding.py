"""Deterministic seed derivation for independent random streams.

Every stochastic stage derives its generator from a base seed plus string
tags, so adding or reordering stages never perturbs the streams of others
and results are stable across processes (no reliance on hash()).
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(base: int, *tags: object) -> int:
    h = hashlib.sha256()
    h.update(str(int(base)).encode())
    for tag in tags:
        h.update(b"/")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(base: int, *tags: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base, *tags))
