import numpy as np


def get_rng(seed=None):
    """Seeded ``numpy.random.Generator``; a generator passed in is returned untouched."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(None if seed is None else int(seed))


def derive_seed(seed, *labels):
    """
    A child seed, stable across runs, for one named use of a parent seed.

    Example:

        >>> derive_seed(0, "validation") == derive_seed(0, "validation")
        True
    """
    tokens = [int(seed)] + [sum((i + 1) * ord(c) for i, c in enumerate(str(label))) for label in labels]
    return int(np.random.SeedSequence(tokens).generate_state(1, dtype=np.uint32)[0])

