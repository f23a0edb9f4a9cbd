import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from noisy_cbo.datasets import Dataset
from noisy_cbo.models import CboError, NoiseSpec, SubsampleSpec
from noisy_cbo.objectives import FiniteSumObjective, Objective
from noisy_cbo.randomness import SeedSpec


class OracleError(CboError):
    """Raised when an oracle cannot produce an estimate."""


@dataclass(frozen=True)
class EvalRecord:
    value: float
    component_evals: int
    exact_value: float | None = None


@dataclass(frozen=True)
class OracleBatch:
    """Noisy values for one iteration; row i belongs to particle i."""

    values: np.ndarray
    component_evals: int
    exact_values: np.ndarray | None = None

    @property
    def errors(self) -> np.ndarray | None:
        if self.exact_values is None:
            return None
        return oracle_error(self.exact_values, self.values)


class Oracle(Protocol):
    evals_per_call: int

    def evaluate(
        self, positions: np.ndarray, seed: SeedSpec, *, with_exact: bool = False
    ) -> OracleBatch: ...

    def exact(self, positions: np.ndarray) -> np.ndarray: ...


def subset_size(ell: float, n_samples: int) -> int:
    # round first so that e.g. 0.7 * 10 = 7.000000000000001 counts as 7
    return min(n_samples, max(1, math.ceil(round(ell * n_samples, 9))))


@dataclass(frozen=True)
class CostLedger:
    """Oracle bookkeeping of one run: iterations, f_j evaluations and weighted cost."""

    iterations: int
    component_evals: int
    cost: float


def cost(iterations: float, dim: int, ell: float, n_samples: int) -> float:
    """k d (ceil(ell M) + 2): d ceil(ell M) per oracle call plus 2 d per update."""
    return iterations * dim * (subset_size(ell, n_samples) + 2)


def gaussian_noise(
    f_values: np.ndarray, spec: NoiseSpec, rng: np.random.Generator
) -> np.ndarray:
    """f + w0 + w1 f, one (w0, w1) row per value, drawn in index order."""
    f_values = np.asarray(f_values, dtype=float)
    if spec.is_exact:
        return f_values.copy()
    omega = rng.standard_normal((f_values.size, 2)).reshape(f_values.shape + (2,))
    return f_values + spec.sigma0 * omega[..., 0] + spec.sigma1 * omega[..., 1] * f_values


def gaussian_noisy_oracle(f_value: float, spec: NoiseSpec, seed: SeedSpec) -> float:
    return float(gaussian_noise(np.array([f_value]), spec, seed.generator())[0])


def oracle_error(
    exact: float | np.ndarray, noisy: float | np.ndarray
) -> float | np.ndarray:
    """E = |f - f_hat|; pass arrays to get the per-particle error vector E_k."""
    error = np.abs(np.asarray(exact, dtype=float) - np.asarray(noisy, dtype=float))
    return float(error) if error.ndim == 0 else error


@dataclass(frozen=True)
class ExactOracle:
    objective: Objective
    evals_per_call: int = 1

    def exact(self, positions: np.ndarray) -> np.ndarray:
        return np.asarray(self.objective(positions), dtype=float)

    def evaluate(
        self, positions: np.ndarray, seed: SeedSpec, *, with_exact: bool = False
    ) -> OracleBatch:
        values = self.exact(positions)
        return OracleBatch(
            values,
            component_evals=len(values),
            exact_values=values.copy() if with_exact else None,
        )


@dataclass(frozen=True)
class GaussianOracle:
    objective: Objective
    noise: NoiseSpec
    evals_per_call: int = 1

    def exact(self, positions: np.ndarray) -> np.ndarray:
        return np.asarray(self.objective(positions), dtype=float)

    def evaluate(
        self, positions: np.ndarray, seed: SeedSpec, *, with_exact: bool = False
    ) -> OracleBatch:
        exact = self.exact(positions)
        values = gaussian_noise(exact, self.noise, seed.generator())
        return OracleBatch(
            values,
            component_evals=len(values),
            exact_values=exact if with_exact else None,
        )


class SubsampleOracle:
    """Mean of f_j over a fresh uniform subset S^i_k of size ceil(ell M) per particle."""

    def __init__(self, dataset: Dataset, spec: SubsampleSpec) -> None:
        if dataset.size < 1:
            raise OracleError("dataset is empty")
        self.dataset = dataset
        self.spec = spec
        self.objective = FiniteSumObjective(dataset)
        self.evals_per_call = subset_size(spec.ell, dataset.size)

    def exact(self, positions: np.ndarray) -> np.ndarray:
        return self.objective(positions)

    def draw_subsets(self, n_particles: int, rng: np.random.Generator) -> np.ndarray:
        # the k smallest of M i.i.d. uniform keys form a uniform k-subset without replacement
        keys = rng.random((n_particles, self.dataset.size))
        size = self.evals_per_call
        return np.argpartition(keys, size - 1, axis=1)[:, :size]

    def evaluate(
        self, positions: np.ndarray, seed: SeedSpec, *, with_exact: bool = False
    ) -> OracleBatch:
        positions = np.atleast_2d(positions)
        n_particles = positions.shape[0]
        if self.evals_per_call == self.dataset.size:
            values = self.objective(positions)
        else:
            subsets = self.draw_subsets(n_particles, seed.generator())
            values = self.objective.subset_values(positions, subsets)
        return OracleBatch(
            values,
            component_evals=n_particles * self.evals_per_call,
            exact_values=self.exact(positions) if with_exact else None,
        )


def subsample_oracle(
    x: Sequence[float] | np.ndarray,
    dataset: Dataset,
    spec: SubsampleSpec,
    seed: SeedSpec,
    *,
    with_exact: bool = False,
) -> EvalRecord:
    batch = SubsampleOracle(dataset, spec).evaluate(
        np.asarray(x, dtype=float)[None, :], seed, with_exact=with_exact
    )
    return EvalRecord(
        value=float(batch.values[0]),
        component_evals=batch.component_evals,
        exact_value=None if batch.exact_values is None else float(batch.exact_values[0]),
    )


def build_oracle(
    objective: Objective,
    noise: NoiseSpec | None = None,
    subsample: SubsampleSpec | None = None,
) -> Oracle:
    if isinstance(objective, FiniteSumObjective):
        return SubsampleOracle(objective.dataset, subsample or SubsampleSpec())
    if noise is None or noise.is_exact:
        return ExactOracle(objective)
    return GaussianOracle(objective, noise)
