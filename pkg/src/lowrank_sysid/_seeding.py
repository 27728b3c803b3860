"""Deterministic RNG substreams.

Every random draw in the package comes from a generator keyed on
``(root seed, index, purpose tag)``. Keys go through ``SeedSequence`` hashing,
so a system's draws do not depend on how many other systems exist or on the
order in which they are generated.
"""
from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def tag_code(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def substream(seed: int, index: int, tag: str) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64,
                                spawn_key=(tag_code(tag), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """Fold integer keys into ``seed`` and return a new 64-bit seed."""
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64,
                                spawn_key=tuple(int(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)
