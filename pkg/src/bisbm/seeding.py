"""Deterministic seed derivation and counter-based per-row streams.

All randomness in the package flows through here. Sub-streams are derived
from a user seed plus a short string tag (and optionally an index), so any
component can be re-run in isolation and parallel rows never share a stream.
Python's builtin hash() is salted per process and must not be used for this.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@lru_cache(maxsize=None)
def _tag_hash(tag: str) -> int:
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def mix_seed(seed: int, tag: str, index: int = 0) -> int:
    """64-bit sub-seed for (seed, tag, index); stable across processes."""
    acc = _splitmix64((int(seed) & _MASK64) ^ _tag_hash(tag))
    if index:
        acc = _splitmix64(acc ^ (int(index) & _MASK64))
    return acc


def philox_key(seed: int, tag: str, index: int = 0) -> int:
    """128-bit Philox key: derived word in the high half, raw index low.

    Distinct (tag, index) pairs give distinct keys, so the streams of
    different rows (or trials) are independent counter-based generators.
    """
    return (mix_seed(seed, tag) << 64) | (int(index) & _MASK64)


def generator(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=philox_key(seed, tag, index)))


def hash_signs(seed: int, indices: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 of (seed, index) reduced to int8 signs.

    This is the implicit labeling primitive: label i is a pure function of
    (seed, i), so huge vertex sets never have to be materialized.
    """
    base = np.uint64(mix_seed(seed, "hash-signs"))
    z = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z + np.uint64(1)) * np.uint64(_GOLDEN) ^ base
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return np.where((z >> np.uint64(63)).astype(bool), 1, -1).astype(np.int8)
