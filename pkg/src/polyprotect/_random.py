import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``.

    Streams with different keys never overlap, so tasks can run in any order
    (or in parallel) and still reproduce the same draws.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
