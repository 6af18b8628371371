"""Seeded random streams with a pinned bit-level algorithm.

All randomness in the package flows through :class:`Stream`. A stream draws
raw 64-bit words from a PCG64 bit generator keyed by a ``SeedSequence``;
uniforms take the top 53 bits of each word, normals come from the
Box-Muller transform, and permutations are stable argsorts of uniform keys.
numpy guarantees the raw PCG64 word stream (and the SeedSequence hash)
across releases, so every draw here is reproducible even if numpy's own
distribution implementations change.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

_INV_2_53 = 2.0**-53


class Stream:
    """Deterministic random value stream keyed by a tuple of integers."""

    def __init__(self, key: int | Sequence[int]):
        if isinstance(key, int):
            key = [key]
        entropy = [int(k) for k in key]
        # SeedSequence zero-pads its entropy pool, so [1] and [1, 0] would
        # collide; the length suffix keeps distinct keys distinct.
        self._bits = np.random.PCG64(np.random.SeedSequence(entropy + [len(entropy)]))

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit words as a uint64 array."""
        if n <= 0:
            raise ValueError("need at least one word")
        return np.atleast_1d(np.asarray(self._bits.random_raw(n), dtype=np.uint64))

    def uniform(self, shape: tuple[int, ...] = ()) -> np.ndarray:
        """Doubles in [0, 1), one per element of ``shape``."""
        n = max(1, int(np.prod(shape, dtype=np.int64)))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return u.reshape(shape)

    def uniform_range(self, lo: float, hi: float, shape: tuple[int, ...] = ()) -> np.ndarray:
        return lo + (hi - lo) * self.uniform(shape)

    def normal(self, shape: tuple[int, ...] = ()) -> np.ndarray:
        """Standard normal draws via Box-Muller on paired uniforms."""
        n = max(1, int(np.prod(shape, dtype=np.int64)))
        m = (n + 1) // 2
        # u1 in (0, 1] so the log is finite; u2 in [0, 1).
        u1 = ((self.raw(m) >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (self.raw(m) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * math.pi) * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Permutation of range(n) from a stable argsort of uniform keys."""
        if n < 0:
            raise ValueError("n must be non-negative")
        return np.argsort(self.uniform((n,)), kind="stable")
