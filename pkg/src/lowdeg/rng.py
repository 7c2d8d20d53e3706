"""Seed derivation and counter-based random generators.

Every sampler in the package draws from a Philox generator whose key is
derived from (seed, stream labels) by hashing.  Philox is counter-based, so
trials keyed by (seed, trial-index) are independent streams and can run on
any worker in any order without changing the output.
"""

from __future__ import annotations

import hashlib

import numpy as np

GENERATOR_ID = "philox-sha256/1"


def derive_key(seed: int, *stream) -> int:
    """128-bit Philox key from a master seed and stream labels."""
    tag = "|".join([str(int(seed))] + [str(s) for s in stream])
    return int.from_bytes(hashlib.sha256(tag.encode()).digest()[:16], "big")


def make_rng(seed: int, *stream) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *stream)))


def derive_seed(seed: int, *stream) -> int:
    """A 63-bit sub-seed, for APIs that take a seed rather than a generator."""
    return derive_key(seed, *stream) >> 65
