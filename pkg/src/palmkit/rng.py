"""Reproducible random streams and scheduling-independent replicate maps."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, TypeVar

import numpy as np

T = TypeVar("T")


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream id) pair naming an independent random stream.

    Sub-streams are addressed by appending indices to ``path``; the same
    address always yields the same draws.
    """

    seed: int
    stream: int = 0
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for v in (self.seed, self.stream, *self.path):
            if not 0 <= int(v) < 2**64:
                raise ValueError("seed, stream and path entries must be 64-bit unsigned")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream), *self.path))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream, self.path + (int(index),))


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a Generator or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None:
        raise ValueError("an explicit random stream is required")
    return RngStream(int(rng)).generator()


def thread_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("PALMKIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"PALMKIT_THREADS must be an integer, got {env!r}") from None
    return 1


def replicate_map(fn: Callable[[np.random.Generator], T], n: int, rng: RngStream,
                  threads: int | None = None) -> list[T]:
    """Run ``fn`` on ``n`` independent child streams; results in index order.

    Replicate ``i`` always sees ``rng.child(i)`` so the output does not depend
    on the number of worker threads.
    """
    def run(i: int) -> T:
        return fn(rng.child(i).generator())

    workers = thread_count(threads)
    if workers == 1 or n < 2:
        return [run(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(n)))
