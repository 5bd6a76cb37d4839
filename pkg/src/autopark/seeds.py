"""Root-seed to named-substream derivation (reproducible across platforms)."""
from __future__ import annotations

import zlib

import numpy as np


def substream(root_seed: int, *names) -> np.random.Generator:
    """Independent generator for (root seed, name path); stable across runs."""
    keys = [int(root_seed) & 0xFFFFFFFF]
    for name in names:
        if isinstance(name, int):
            keys.append(name & 0xFFFFFFFF)
        else:
            keys.append(zlib.crc32(str(name).encode()))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(keys)))


def derive_int(root_seed: int, *names, bits: int = 63) -> int:
    """Deterministic integer for seeding third-party RNGs."""
    return int(substream(root_seed, *names).integers(0, 2**bits))
