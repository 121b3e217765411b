"""Deterministic seed derivation.

Every random decision in the toolkit draws from a generator obtained via
``rng_for(master, *tags)`` so that a (config, master seed) pair fully
determines all outputs, independent of machine or process.

Token hashing uses 64-bit FNV-1a over UTF-8 bytes; the same hash mixes
string tags into derived seeds.
"""

from __future__ import annotations

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: str | bytes) -> int:
    """64-bit FNV-1a hash, stable across runs and machines."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def derive_seed(master: int, *tags: int | str) -> int:
    """Mix a master seed with stage tags into a single 64-bit seed."""
    h = _FNV_OFFSET
    for part in (master, *tags):
        if isinstance(part, str):
            h ^= fnv1a64(part)
        else:
            h ^= int(part) & _MASK64
        h = (h * _FNV_PRIME) & _MASK64
    return h


def rng_for(master: int, *tags: int | str) -> np.random.Generator:
    """Generator seeded deterministically from (master, tags)."""
    return np.random.default_rng(derive_seed(master, *tags))
