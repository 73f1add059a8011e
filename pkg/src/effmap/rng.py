"""Seed derivation and random generator construction.

Every random stream in the package is a numpy PCG64 generator seeded
through `derive_seed`, which chains splitmix64 over a master seed and a
tuple of integer tags.  The tag assignments are fixed (see README,
"Randomness") so a cohort, a training run, or a whole experiment is a
pure function of (config, master seed).
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# stream tags; values are arbitrary but frozen
TAG_SUBJECT = 100
TAG_SURGERY = 200
TAG_REGISTRATION = 300
TAG_FOLDS = 400
TAG_TRAIN = 500
TAG_MODEL_INIT = 600
TAG_WARP = 1
TAG_BIAS = 2
TAG_NOISE = 3
TAG_TEMPLATE = 4


def splitmix64(x: int) -> int:
    """One step of the splitmix64 mixing function (public domain constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(master: int, *tags: int) -> int:
    """Derive a child seed from a master seed and integer tags.

    derive_seed(m) == splitmix64(m); each tag folds in one more round, so
    distinct tag tuples give independent streams.
    """
    s = splitmix64(master & _MASK64)
    for t in tags:
        s = splitmix64(s ^ splitmix64(t & _MASK64))
    return s


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the one generator family used everywhere."""
    return np.random.Generator(np.random.PCG64(seed))
