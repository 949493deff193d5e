"""Deterministic seed derivation.

All randomness in the package flows from stable hashes of
(master seed, purpose label, counters...), so any artifact is reproducible
from one integer and no mutable RNG stream state needs persisting.
"""

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Collapse a tuple of ints/strings/floats into a 64-bit seed."""
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "little")


def spawn_rng(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))
