"""Seed derivation with fixed domain separation.

Every random stream in the package is drawn from ``numpy.random.Generator``
seeded through a ``SeedSequence`` whose entropy is ``(seed, domain)``, so the
transfer matrix, initial states and instance offsets never share a stream.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

DOMAIN_MATRIX = 0x6D61747278
DOMAIN_STATE = 0x7374617465
DOMAIN_RESERVOIR = 0x7265737672

# golden-ratio increment; instance 0 keeps the base seed
INSTANCE_STRIDE = 0x9E3779B97F4A7C15


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed


def generator(seed: int, domain: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([check_seed(seed), domain])))


def derive_seed(seed: int, domain: int) -> int:
    """Derive a 64-bit sub-seed of ``seed`` for ``domain``."""
    words = np.random.SeedSequence([check_seed(seed), domain]).generate_state(2, dtype=np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def instance_seed(seed: int, index: int) -> int:
    return (check_seed(seed) + index * INSTANCE_STRIDE) & MASK64
