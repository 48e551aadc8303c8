"""Reproducible random streams.

A stream is identified by ``(seed, stream_id)``; sub-streams are derived from
extra integer keys (replication chunk, term index...), so draws never depend
on how work is scheduled across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: int = 0

    def generator(self, *keys: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *keys))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream)


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an RngStream or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)
