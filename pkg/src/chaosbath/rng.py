"""Counter-based random stream derivation.

Every stochastic task in this package draws from its own Philox stream whose
key is derived from a master seed plus an integer path identifying the task,
e.g. ``(experiment_tag, epsilon_index, realization_index)``.  Distinct paths
give statistically independent streams, and adding tasks (more realizations,
more epsilon points) never perturbs the draws of existing ones.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# path tags for the package's stochastic tasks
TAG_TRAJECTORY = 1
TAG_PARAMS = 2
TAG_SIGMA = 3
TAG_ZETA = 4
TAG_ETA = 5
TAG_MOMENTS = 6
TAG_CALIBRATION = 7
TAG_TABLE = 8


def _splitmix64(x: np.uint64) -> np.uint64:
    x = np.uint64(x) + _GOLDEN
    z = x
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def derive_key(master_seed: int, *path: int) -> np.ndarray:
    """Hash a master seed and an integer path into a 128-bit Philox key."""
    with np.errstate(over="ignore"):
        h = _splitmix64(np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF))
        for item in path:
            h = _splitmix64(h ^ np.uint64(int(item) & 0xFFFFFFFFFFFFFFFF))
        lo = _splitmix64(h)
        hi = _splitmix64(lo)
    return np.array([lo, hi], dtype=np.uint64)


def stream(master_seed: int, *path: int) -> np.random.Generator:
    """Independent generator for the task identified by ``path``."""
    return np.random.Generator(np.random.Philox(key=derive_key(master_seed, *path)))
