"""Counter-based random streams for path-parallel simulation.

Each simulated path owns an independent splitmix64 stream keyed by
(master seed, path index), so ensembles are reproducible regardless of
scheduling or worker count.  The generator is implemented with plain
uint64 arithmetic so it can be called from numba-compiled kernels.
"""
from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def next_u64(state):
    """Advance a splitmix64 stream; returns (new_state, draw)."""
    state = state + _GOLDEN
    return state, _mix(state)


@njit(cache=True, inline="always")
def next_uniform(state):
    """Uniform double in (0, 1), never exactly 0 or 1."""
    state, z = next_u64(state)
    u = (z >> np.uint64(11)) * 1.1102230246251565e-16  # 2**-53
    if u <= 0.0:
        u = 1.1102230246251565e-16
    return state, u


@njit(cache=True)
def stream_state(seed, index):
    """Initial state of the stream for one path: hash of (seed, index)."""
    s = _mix(np.uint64(seed) * _GOLDEN + np.uint64(index))
    return _mix(s + _GOLDEN)


def master_generator(seed: int) -> np.random.Generator:
    """Philox generator for non-path vectorized sampling (coupled noise)."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def substream(seed: int, *indices: int) -> np.random.Generator:
    """Philox generator keyed by (seed, indices) for deterministic substreams."""
    counter = np.zeros(4, dtype=np.uint64)
    for k, ix in enumerate(indices[:3]):
        counter[k + 1] = np.uint64(ix)
    return np.random.Generator(np.random.Philox(key=np.uint64(seed), counter=counter))
