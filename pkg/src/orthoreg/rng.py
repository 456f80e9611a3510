"""Named, reproducible random substreams.

Every random draw in the package comes from ``substream(seed, name, ...)``;
the stream depends only on the seed and the key path, so results do not
depend on the order or thread in which tasks run.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("substream indices must be nonnegative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def seed_sequence(seed: int, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in path))


def substream(seed: int, *path) -> np.random.Generator:
    """``numpy`` generator for the key path, e.g. ``substream(7, "bootstrap", 12)``."""
    return np.random.default_rng(seed_sequence(seed, *path))
