"""
Named random substreams.

All randomness derives from one integer seed. Each purpose (initialization,
dropout, fracture of instance k, ...) gets its own counter-based Philox
generator keyed by a hash of the seed and the purpose names, so adding a
consumer never shifts the draws of another.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _key(seed: int, names: tuple[object, ...]) -> int:
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed)).encode())
    for name in names:
        h.update(b"\x1f")
        h.update(str(name).encode())
    return int.from_bytes(h.digest(), "little")


def substream(seed: int, *names: object) -> np.random.Generator:
    """Return an independent generator for ``(seed, *names)``."""
    return np.random.Generator(np.random.Philox(key=_key(seed, names)))


def derive_seed(seed: int, *names: object) -> int:
    """Derive a 63-bit child seed, for APIs that want an integer."""
    return _key(seed, names) & ((1 << 63) - 1)
