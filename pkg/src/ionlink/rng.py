"""Counter-based random substreams.

A single root seed expands into independent Philox streams keyed by
``(purpose, *key)`` through :class:`numpy.random.SeedSequence` spawn keys.
Because a stream depends only on its own key, adding sweep points or
batches never changes the draws of existing ones.
"""

from __future__ import annotations

import numpy as np

PURPOSES = ("bits", "position", "velocity", "ionization_time", "pilot")


def substream(seed: int, purpose: str, *key: int) -> np.random.Generator:
    if purpose not in PURPOSES:
        raise ValueError(f"unknown stream purpose {purpose!r}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(PURPOSES.index(purpose), *map(int, key)))
    return np.random.Generator(np.random.Philox(ss))


class StreamSet:
    """Per-purpose generators sharing one root seed and key prefix."""

    def __init__(self, seed: int, *key: int):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self._cache = {}

    def __getitem__(self, purpose: str) -> np.random.Generator:
        if purpose not in self._cache:
            self._cache[purpose] = substream(self.seed, purpose, *self.key)
        return self._cache[purpose]

    def child(self, *key: int) -> "StreamSet":
        return StreamSet(self.seed, *self.key, *key)


def as_streams(rng) -> "StreamSet | _SingleStream":
    if isinstance(rng, StreamSet):
        return rng
    if isinstance(rng, np.random.Generator):
        return _SingleStream(rng)
    return StreamSet(int(rng))


class _SingleStream:
    # one generator serving every purpose, for ad-hoc use
    def __init__(self, gen):
        self.gen = gen

    def __getitem__(self, purpose):
        return self.gen
