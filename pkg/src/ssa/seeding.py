"""Named random sub-streams derived from a single 64-bit seed."""

from __future__ import annotations

import zlib

import numpy as np


def _key(name: str | int) -> int:
    return name if isinstance(name, int) else zlib.crc32(name.encode("utf-8"))


def seed_sequence(seed: int, *names: str | int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_key(n) for n in names))


def derive_seed(seed: int, *names: str | int) -> int:
    """A 64-bit integer seed for the sub-stream ``names`` of ``seed``."""
    hi, lo = seed_sequence(seed, *names).generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def substream(seed: int, *names: str | int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, *names))
