"""Splittable random streams.

Every Monte Carlo trial draws from its own substream keyed by integers,
so results do not depend on the order in which trials are evaluated.
"""
import numpy as np


def substream(seed, *key):
    """Return an independent generator for ``(seed, *key)``.

    Parameters
    ----------
    seed : int
        Root seed of the experiment.
    *key : int
        Path identifying the substream (experiment code, trial index, purpose).
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng):
    """Accept a Generator or an integer seed and return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return substream(0 if rng is None else rng)
