"""Reproducible random streams.

A stream is a ``(seed, stream_id)`` pair. The generator is PCG64 seeded through
``numpy.random.SeedSequence(seed, spawn_key=(stream_id,))``, so distinct stream
ids give statistically independent streams and the same pair always replays the
same draws. Child streams hash ``(stream_id, index)`` into a new stream id.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = ["RngStream", "RngLike", "as_generator", "split_trials"]

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) <= _U64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.stream_id) < 0:
            raise ValueError("stream_id must be nonnegative")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream_id", int(self.stream_id))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, index: int) -> "RngStream":
        """Derived stream for worker / replicate ``index``."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, int(index)))
        return RngStream(self.seed, int(ss.generate_state(1, dtype=np.uint64)[0]))


RngLike = Union[RngStream, np.random.Generator, int]


def as_generator(rng: RngLike) -> np.random.Generator:
    """A fresh generator for an :class:`RngStream` or int seed; a Generator passes through."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return RngStream(int(rng)).generator()


def split_trials(trials: int, workers: int) -> list[int]:
    """Chunk sizes for ``trials`` spread over ``workers`` (larger chunks first)."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    base, extra = divmod(int(trials), workers)
    return [base + (1 if i < extra else 0) for i in range(workers) if base or i < extra]
