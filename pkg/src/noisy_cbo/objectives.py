import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.special import expit

from noisy_cbo.datasets import Dataset
from noisy_cbo.models import CboError, ObjectiveKind, ObjectiveSpec


class ObjectiveError(CboError):
    """Raised when an objective is evaluated outside its domain."""


class Objective(Protocol):
    """Vectorized exact objective: maps an N x d array to N values."""

    def __call__(self, positions: np.ndarray) -> np.ndarray: ...


def rastrigin_values(points: np.ndarray) -> np.ndarray:
    # x^2 + 10 (1 - cos 2 pi x) per coordinate: same function as
    # sum(x^2 - 10 cos 2 pi x) + 10 d, but every term is >= 0 in floating point.
    points = np.asarray(points, dtype=float)
    terms = points**2 + 10.0 * (1.0 - np.cos(2.0 * np.pi * points))
    return terms.sum(axis=-1)


def rastrigin(x: Sequence[float] | np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ObjectiveError(f"rastrigin expects a nonempty vector, got shape {x.shape}")
    return float(rastrigin_values(x))


def rotation_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotated_rastrigin_values(points: np.ndarray, angle: float) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.shape[-1] != 2:
        raise ObjectiveError(f"rotated_rastrigin requires d = 2, got d = {points.shape[-1]}")
    return rastrigin_values(points @ rotation_matrix(angle).T)


def rotated_rastrigin(x: Sequence[float] | np.ndarray, angle: float) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise ObjectiveError(f"rotated_rastrigin requires a 2-vector, got shape {x.shape}")
    return float(rotated_rastrigin_values(x, angle))


def component_losses(positions: np.ndarray, dataset: Dataset) -> np.ndarray:
    """f_j(x) = (b_j - sigmoid(x^T a_j))^2 for every particle and sample (N x M)."""
    margins = np.atleast_2d(positions) @ dataset.features.T
    return (dataset.labels - expit(margins)) ** 2


def finite_sum_loss(
    x: Sequence[float] | np.ndarray,
    dataset: Dataset,
    subset: Sequence[int] | np.ndarray | None = None,
) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (dataset.dim,):
        raise ObjectiveError(f"x has shape {x.shape}, dataset has d = {dataset.dim}")
    losses = component_losses(x, dataset)[0]
    if subset is None:
        return float(losses.mean())
    indices = np.asarray(subset, dtype=int)
    if indices.size == 0:
        raise ObjectiveError("subset is empty")
    if indices.min() < 0 or indices.max() >= dataset.size:
        raise ObjectiveError(f"subset indices must lie in [0, {dataset.size})")
    return float(losses[indices].mean())


@dataclass(frozen=True)
class Rastrigin:
    def __call__(self, positions: np.ndarray) -> np.ndarray:
        return rastrigin_values(positions)


@dataclass(frozen=True)
class RotatedRastrigin:
    angle: float = math.pi / 3

    def __call__(self, positions: np.ndarray) -> np.ndarray:
        return rotated_rastrigin_values(positions, self.angle)


@dataclass(frozen=True)
class FiniteSumObjective:
    dataset: Dataset

    def __call__(self, positions: np.ndarray) -> np.ndarray:
        return component_losses(positions, self.dataset).mean(axis=1)

    def subset_values(self, positions: np.ndarray, subsets: np.ndarray) -> np.ndarray:
        """Mean of f_j over row i of ``subsets`` for particle i."""
        sampled = self.dataset.features[subsets]
        margins = np.einsum("nd,nkd->nk", positions, sampled)
        losses = (self.dataset.labels[subsets] - expit(margins)) ** 2
        return losses.mean(axis=1)


def build_objective(spec: ObjectiveSpec, dataset: Dataset | None = None) -> Objective:
    if spec.kind == ObjectiveKind.RASTRIGIN:
        return Rastrigin()
    if spec.kind == ObjectiveKind.ROTATED_RASTRIGIN:
        return RotatedRastrigin(spec.angle)
    if dataset is None:
        raise ObjectiveError("finite_sum objective needs a dataset")
    return FiniteSumObjective(dataset)
