"""Seedable, portable randomness.

Every random draw in dataset generation derives from numpy's PCG64
seeded through a SeedSequence over an integer tuple, so a sample's
randomness is a pure function of (seed, stream tag, sample index) and
parallel generation agrees bit-for-bit with serial generation.
"""
from __future__ import annotations

import numpy as np

# Stream tags keep independent purposes (placement, noise, ...) from
# colliding when they share a user seed.
STREAM_COMPOSE = 1
STREAM_NOISE = 2
STREAM_PHASE = 3
STREAM_SHUFFLE = 4


def rng_for(*entropy: int) -> np.random.Generator:
    """PCG64 generator keyed by an integer tuple."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
