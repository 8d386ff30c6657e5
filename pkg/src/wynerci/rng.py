"""Seeding helpers.

All randomness goes through numpy's PCG64 bit generator, which produces the
same stream on every platform for a given 64-bit seed.  Child seeds are
derived with a stable hash so that a single top-level seed reproduces a whole
experiment regardless of execution order.
"""
from __future__ import annotations

import hashlib

import numpy as np

SEED_MASK = (1 << 63) - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))


def derive_seed(base: int, *keys: int) -> int:
    """``base`` plus a stable 62-bit hash of ``keys`` (wrapped to 63 bits)."""
    h = hashlib.sha256(",".join(str(int(k)) for k in keys).encode()).digest()
    return (int(base) + (int.from_bytes(h[:8], "little") >> 2)) & SEED_MASK
