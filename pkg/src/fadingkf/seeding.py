"""Counter-based random streams keyed by ``(master_seed, path_index, stream)``.

Every random draw in the package comes from a Philox generator whose key is
derived from the master seed, the index of the path (or sample pair) and a
stream tag. Results are therefore independent of evaluation order and of how
paths are distributed over workers.
"""

import enum

import numpy as np

MAX_SEED = 2**64 - 1


class Stream(enum.IntEnum):
    CHANNEL = 0
    NOISE = 1
    CONTRACTION = 2
    MIXING = 3
    PROPERTY = 4


def generator(master_seed, index=0, stream=Stream.CHANNEL):
    master_seed = int(master_seed)
    if not 0 <= master_seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {master_seed}")
    ss = np.random.SeedSequence([master_seed, int(index), int(stream)])
    return np.random.Generator(np.random.Philox(ss))
