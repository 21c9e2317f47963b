"""Per-purpose random streams.

Every consumer of randomness gets its own generator derived from
``(seed, purpose)``, so e.g. changing the ADAM shuffle never perturbs the
data sample or the initial weights.
"""

import numpy as np

PURPOSES = {"data": 0, "init": 1, "shuffle": 2, "bounce": 3}


def stream(seed: int, purpose: str) -> np.random.Generator:
    try:
        key = PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown random stream {purpose!r}") from None
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), key])))
