"""Seed-partitioned Monte Carlo execution with mergeable running moments.

Work is split into fixed-size blocks, each seeded by its own child of a
``SeedSequence``. Block boundaries depend only on the draw count, so the
merged estimate does not depend on how many workers ran the blocks.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

BLOCK_SIZE = 4096


@dataclass
class Moments:
    """Count, mean and sum of squared deviations, per component."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, samples: np.ndarray) -> "Moments":
        samples = np.asarray(samples, dtype=float)
        mean = samples.mean(axis=0)
        return cls(samples.shape[0], mean, ((samples - mean) ** 2).sum(axis=0))

    def merge(self, other: "Moments") -> "Moments":
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta**2 * self.count * other.count / n
        return Moments(n, mean, m2)

    @property
    def stderr(self) -> np.ndarray:
        if self.count < 2:
            return np.full_like(self.mean, np.inf)
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


def worker_count() -> int:
    env = os.environ.get("PLANNER_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_blocks(sample_block, n_draws: int, seed, workers: int | None = None) -> Moments:
    """Evaluate ``sample_block(rng, size) -> (size, ...) samples`` over
    ``n_draws`` draws and return the merged moments."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    sizes = [BLOCK_SIZE] * (n_draws // BLOCK_SIZE)
    if n_draws % BLOCK_SIZE:
        sizes.append(n_draws % BLOCK_SIZE)
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def one(args):
        child, size = args
        return Moments.of(sample_block(np.random.default_rng(child), size))

    workers = workers or worker_count()
    if workers == 1 or len(sizes) == 1:
        parts = [one(a) for a in zip(children, sizes)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, zip(children, sizes)))
    total = parts[0]
    for part in parts[1:]:
        total = total.merge(part)
    return total
