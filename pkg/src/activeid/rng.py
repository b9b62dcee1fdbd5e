"""Named, counter-based random streams.

Every stream is a Philox generator keyed by the root seed plus a tuple of
labels, so ``stream(7, "trial", 3, "process")`` is reproducible and
independent of every other label path.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("integer stream labels must be nonnegative")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def seed_key(seed) -> tuple[int, ...]:
    """Normalize an int or tuple seed into a tuple of nonnegative ints."""
    if isinstance(seed, (tuple, list)):
        return tuple(_key(s) for s in seed)
    return (_key(seed),)


def stream(seed, *labels) -> np.random.Generator:
    key = seed_key(seed) + tuple(_key(lab) for lab in labels)
    ss = np.random.SeedSequence(entropy=key[0], spawn_key=key[1:])
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *labels) -> int:
    """A 63-bit integer seed drawn from the named stream."""
    return int(stream(seed, *labels).integers(0, 2**63 - 1))
