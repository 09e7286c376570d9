"""Counter-based random streams.

Two flavours are provided:

* ``numpy_stream(seed, *task)`` returns a ``numpy.random.Generator`` backed by
  Philox (a counter-based bit generator) whose key is derived from
  ``(seed, *task)``.  Used for environment sampling.
* ``path_key`` / ``uniform_at`` are numba-compiled SplitMix64 counter hashes
  used inside the walk kernels.  Draw number ``c`` of path ``p`` is a pure
  function of ``(seed, p, c)``, so batches are order independent and resumable.
"""
import numpy as np
from numba import njit

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53

_SEED_MASK = (1 << 64) - 1


def numpy_stream(seed, *task):
    """Independent Philox generator for stream ``(seed, *task)``."""
    seq = np.random.SeedSequence(int(seed) & _SEED_MASK, spawn_key=tuple(int(t) for t in task))
    return np.random.Generator(np.random.Philox(seq))


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def path_key(seed, path):
    """Key of the stream owned by ``path`` under experiment ``seed``."""
    k = mix64(np.uint64(seed) + _GAMMA)
    return mix64(k ^ mix64(np.uint64(path) * _GAMMA + _M2))


@njit(cache=True)
def uniform_at(key, counter):
    """Uniform on [0, 1) for draw ``counter`` of stream ``key``."""
    z = mix64(key + (np.uint64(counter) + np.uint64(1)) * _GAMMA)
    return np.float64(z >> _S11) * _TO_UNIT


def as_seed(seed):
    """Normalize a user seed to the unsigned 64-bit range used by the kernels."""
    return np.uint64(int(seed) & _SEED_MASK)
