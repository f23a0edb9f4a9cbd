"""Keyed random streams.

Every random draw in a run comes from a generator keyed by the master seed and
a tuple of stream coordinates, never from a shared global state. Two calls with
the same ``SeedSpec`` produce the same numbers no matter which process, thread
or order executes them.

Stream layout used across the package::

    (run, INIT)                      initial positions
    (run, ORACLE, k)                 oracle randomness at iteration k, row i = particle i
    (run, DIFFUSION, k)              eta at iteration k, row i = particle i, column s
    (SPLIT,) / (SYNTHETIC,) / ...    dataset and Monte Carlo helpers
"""

from dataclasses import dataclass

import numpy as np

INIT = 0
ORACLE = 1
DIFFUSION = 2
SPLIT = 3
SYNTHETIC = 4
MONTE_CARLO = 5


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_id: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not 0 <= self.master_seed < 2**64:
            raise ValueError(f"master_seed must fit in 64 bits: {self.master_seed}")
        if any(part < 0 for part in self.stream_id):
            raise ValueError(f"stream ids must be nonnegative: {self.stream_id}")

    def child(self, *parts: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.stream_id + tuple(int(p) for p in parts))

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.master_seed, spawn_key=self.stream_id)
        return np.random.Generator(np.random.Philox(sequence))


def run_seed(master_seed: int, run_index: int) -> SeedSpec:
    return SeedSpec(master_seed, (run_index,))
