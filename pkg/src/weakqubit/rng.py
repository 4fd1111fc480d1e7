"""Seeded random streams.

Every stream is a PCG64 generator built from ``SeedSequence(seed,
spawn_key=(purpose, index))``. ``purpose`` separates independent roles
(detector noise, oracle phase, oracle noise) and ``index`` separates
trajectories or sweep points, so any subset of runs can be executed in
any order, or in parallel, and still reproduce bit for bit.
"""

import numpy as np

DETECTOR_NOISE = 0
ORACLE_PROCESS = 1
ORACLE_NOISE = 2
SWEEP = 3


def stream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    if seed < 0 or seed >= 2 ** 64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def derived_seed(seed: int, index: int) -> int:
    """A 64-bit seed for run ``index`` of a sweep rooted at ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(SWEEP, int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
