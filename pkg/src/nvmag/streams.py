"""Named random-number streams.

All randomness in the package flows from one root seed through
``derive_rng(seed, *keys)``.  Keys name the consumer (module, purpose,
shot index, generation, ...) so that independent loops get disjoint,
reproducible streams no matter how work is scheduled.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _key_word(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Generator for the stream named by ``keys`` under the given root seed."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key_word(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def as_rng(seed_or_rng) -> np.random.Generator:
    """Accept either an integer seed or an existing Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(int(seed_or_rng))
