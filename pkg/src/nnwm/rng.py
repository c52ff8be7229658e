"""Counter-based splitmix64 streams.

splitmix64 advances its state by a fixed odd constant, so the i-th output is
``mix(seed + (i + 1) * GAMMA)``. That makes the generator trivially
vectorizable with wrapping uint64 arithmetic while staying bit-identical to
the sequential reference.
"""

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1

# One stream per purpose so that, e.g., adding dropout does not perturb init.
PURPOSES = {
    "init": 0x1,
    "shuffle": 0x2,
    "dropout": 0x3,
    "carrier": 0x4,
    "key": 0x5,
    "data": 0x6,
    "split": 0x7,
    "bits": 0x8,
}


def mix64(z):
    """splitmix64 finalizer; works on Python ints and uint64 arrays."""
    if isinstance(z, (int, np.integer)):
        z = int(z) & MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Sequential-equivalent splitmix64 with vectorized draws.

    >>> SplitMix64(0).next_u64()
    16294208416658607535
    """

    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next_u64(self, size=None):
        if size is None:
            self.state = (self.state + GAMMA) & MASK64
            return mix64(self.state)
        n = int(np.prod(size))
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + steps * np.uint64(GAMMA)
        self.state = (self.state + n * GAMMA) & MASK64
        return mix64(states).reshape(size)

    def uniform(self, size=None):
        """Doubles in [0, 1) from the top 53 bits."""
        if size is None:
            return (self.next_u64() >> 11) * 2.0**-53
        u = self.next_u64(size) >> np.uint64(11)
        return u.astype(np.float64) * 2.0**-53

    def normal(self, size):
        """Standard normals via Box-Muller (one pair of uniforms per value)."""
        n = int(np.prod(size))
        u = self.uniform((n, 2))
        u1 = 1.0 - u[:, 0]  # (0, 1], keeps log finite
        return (np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u[:, 1])).reshape(size)

    def integers(self, high, size=None):
        """Integers in [0, high) by multiply-shift on 53-bit uniforms."""
        return np.floor(self.uniform(size) * high).astype(np.int64)

    def permutation(self, n):
        """Uniform permutation by sorting random 64-bit keys."""
        keys = self.next_u64((n,))
        return np.argsort(keys, kind="stable")


def stream(seed, purpose):
    """Independent stream for ``purpose`` derived from a user seed."""
    tag = PURPOSES[purpose] if isinstance(purpose, str) else int(purpose)
    return SplitMix64(mix64((int(seed) & MASK64) ^ mix64(tag * GAMMA)))
