"""Reproducible block-parallel Monte Carlo.

Repetitions are cut into fixed-size blocks.  Block ``b`` of stream ``s``
draws from ``SeedSequence(seed, spawn_key=(s, b))``, so every repetition's
randomness depends only on ``(seed, s, rep index)`` and not on how many
workers run the blocks.  Results are gathered in block order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, TypeVar

import numpy as np

BLOCK_SIZE = 10_000

R = TypeVar("R")


@dataclass(frozen=True)
class Block:
    index: int
    start: int
    size: int
    rng: np.random.Generator


def block_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(index))))


def blocks(reps: int, seed: int, stream: int = 0, block_size: int = BLOCK_SIZE) -> list[Block]:
    if reps < 1:
        raise ValueError("need at least one repetition")
    out = []
    for i, start in enumerate(range(0, reps, block_size)):
        out.append(Block(i, start, min(block_size, reps - start), block_rng(seed, stream, i)))
    return out


def map_blocks(fn: Callable[[Block], R], reps: int, seed: int, *, stream: int = 0, workers: int = 1,
               block_size: int = BLOCK_SIZE) -> list[R]:
    """Apply ``fn`` to every block and return results in block order."""
    todo = blocks(reps, seed, stream, block_size)
    if workers <= 1 or len(todo) == 1:
        return [fn(b) for b in todo]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, todo))


def noise_blocks(model, N: int, reps: int, seed: int, *, stream: int = 0,
                 block_size: int = BLOCK_SIZE) -> list[np.ndarray]:
    """Primitive model noise per block, drawn once (for reuse across candidates)."""
    return [model.noise(b.rng, b.size, N) for b in blocks(reps, seed, stream, block_size)]


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo mean with its standard error."""

    value: float
    stderr: float
    reps: int

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "Estimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        sd = float(samples.std(ddof=1)) if n > 1 else 0.0
        return cls(float(samples.mean()), float(sd / np.sqrt(n)), n)

    def __format__(self, spec):
        spec = spec or ".4f"
        return f"{self.value:{spec}} +- {self.stderr:{spec}}"


def combined_z(a: Estimate, b: Estimate) -> float:
    """Difference in units of the combined standard error."""
    se = float(np.hypot(a.stderr, b.stderr))
    diff = a.value - b.value
    return 0.0 if se == 0 and diff == 0 else diff / se if se > 0 else np.inf
