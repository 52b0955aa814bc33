"""Deterministic, splittable random streams.

All randomness in the package flows from a single 64-bit seed through
counter-based Philox streams. A given ``(seed, stream)`` pair yields the same
draws regardless of process, thread count, or the order in which sibling
streams are consumed, which is what makes parallel sweeps bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MAX_SEED = 2**64


@dataclass(frozen=True)
class RngKey:
    """Stateless address of a random stream: a seed plus a split path.

    ``RngKey(7).split(3, 1)`` names the same stream every time; materialize it
    with :meth:`generator` when draws are needed.
    """

    seed: int
    stream: tuple = ()

    def __post_init__(self):
        if isinstance(self.seed, bool) or int(self.seed) != self.seed:
            raise ValueError(f"seed must be an integer, got {self.seed!r}")
        if not 0 <= int(self.seed) < _MAX_SEED:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream", tuple(int(s) for s in self.stream))
        if any(s < 0 for s in self.stream):
            raise ValueError("stream indices must be non-negative")

    def split(self, *indices: int) -> "RngKey":
        """Derive an independent child stream at the given indices."""
        return RngKey(self.seed, self.stream + tuple(indices))

    def generator(self) -> np.random.Generator:
        """A fresh Philox generator positioned at this (seed, stream)."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(ss))


def ensure_generator(rng) -> np.random.Generator:
    """Accept an RngKey, a Generator, or a plain integer seed."""
    if isinstance(rng, RngKey):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)) and not isinstance(rng, bool):
        return RngKey(int(rng)).generator()
    raise ValueError(f"expected RngKey, Generator, or integer seed, got {type(rng).__name__}")
