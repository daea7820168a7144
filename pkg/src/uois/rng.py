"""Seeded random streams.

Every random draw in the package comes from numpy's Philox counter-based
generator keyed by ``(seed, index)``, so sample ``index`` of a batch can be
reproduced on its own, in any order, and on any worker.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator for sample ``index`` under ``seed``."""
    key = (int(seed) & _MASK64) | ((int(index) & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))
