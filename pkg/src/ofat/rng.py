"""Deterministic counter-based random streams.

All randomness in the package flows through :class:`Rng`, a thin wrapper
around numpy's Philox4x64 bit generator. Philox is counter-based: the
(seed, stream_id) pair forms its 128-bit key, so

* the same (seed, stream_id) replays the same sequence on every run and
  platform (for a fixed numpy version), and
* distinct stream_ids give statistically independent streams without any
  coordination between owners.

Subsystems never share a stream; each gets one of the named ids below and
consumes it sequentially.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream ids, one per subsystem. Keep stable: checkpointed runs replay them.
STREAM_WEIGHTS = 1  # supernet / teacher weight init
STREAM_DATA = 2  # synthetic dataset generation
STREAM_MASK = 3  # span masking during training
STREAM_ARCH = 4  # per-step subnet sampling (stage 2)
STREAM_SEARCH = 5  # candidate sampling during random search
STREAM_EVAL_MASK = 6  # fixed evaluation masks
STREAM_TEACHER = 7  # teacher weight init / warmup


class Rng:
    """One deterministic random stream, identified by (seed, stream_id)."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def stream(self, stream_id: int) -> "Rng":
        """A fresh independent stream under the same seed."""
        return Rng(self.seed, stream_id)

    def uniform(self, size=None) -> np.ndarray:
        """Uniform float64 draws in [0, 1)."""
        return self._gen.random(size)

    def normal(self, size=None) -> np.ndarray:
        """Standard normal float64 draws."""
        return self._gen.standard_normal(size)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in [low, high)."""
        return self._gen.integers(low, high, size=size)

    def index(self, n: int) -> int:
        """One uniform index in [0, n)."""
        return int(self._gen.integers(0, n))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream_id={self.stream_id})"
