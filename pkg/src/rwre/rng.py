"""Deterministic seed derivation and uniform streams.

Every random quantity in this package is a pure function of a 64-bit seed
and an index.  Slot ``i`` of the stream rooted at ``seed`` is

    splitmix64_finalize(seed + (i + 1) * GOLDEN)   (mod 2**64)

where GOLDEN is the splitmix64 increment 0x9E3779B97F4A7C15 and the
finalizer is the standard splitmix64 output mixer.  Consequences:

* per-edge draws depend only on (seed, edge_id), so sampling an environment
  is independent of iteration order, chunk boundaries and worker count;
* an environment and a percolation sample built from the same seed share
  their per-edge uniforms, which is what makes the two-point/percolation
  coupling exact;
* per-trial seeds are slots of the base seed, so Monte Carlo batches can be
  split across threads without changing any result.

Stream tags below are huge indices (far above any realistic edge id or step
count), used to split one trial seed into non-overlapping substreams.

The jitted kernels in ``_kernels`` re-implement the same arithmetic on
``numpy.uint64``; ``tests/test_rng.py`` pins the two implementations to each
other bit for bit.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# Substream tags: indices deliberately outside the range of edge ids and
# step counts so tag slots never collide with data slots.
STREAM_ENV = 0x45E5_0000_0000_0001
STREAM_WALK = 0x57A1_0000_0000_0002

_TWO53 = float(1 << 53)


def _finalize(x: int) -> int:
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return (x ^ (x >> 31)) & MASK64


def mix64(seed: int, index: int) -> int:
    """Slot ``index`` of the splitmix64 stream rooted at ``seed``."""
    return _finalize((seed + GOLDEN * (index + 1)) & MASK64)


def unit_uniform(seed: int, index: int) -> float:
    """Uniform in [0, 1) with 53 random bits, from slot ``index`` of ``seed``."""
    return (mix64(seed, index) >> 11) / _TWO53


def trial_seed(base_seed: int, trial: int) -> int:
    """Root seed for Monte Carlo trial ``trial``."""
    return mix64(base_seed, trial)


def env_seed(seed: int) -> int:
    """Environment substream of a trial seed."""
    return mix64(seed, STREAM_ENV)


def walk_seed(seed: int) -> int:
    """Walk-step substream of a trial seed."""
    return mix64(seed, STREAM_WALK)


def uniform_array(seed: int, indices: np.ndarray) -> np.ndarray:
    """Vectorized ``unit_uniform`` over an int array of indices."""
    x = np.uint64(seed & MASK64) + np.uint64(GOLDEN) * (
        indices.astype(np.uint64) + np.uint64(1)
    )
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    x = x ^ (x >> np.uint64(31))
    return (x >> np.uint64(11)).astype(np.float64) / _TWO53
