import math
from enum import StrEnum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class CboError(ValueError):
    """Base class for every error raised by noisy_cbo."""


class ConfigurationError(CboError):
    """Raised when parameters or a configuration file are invalid."""


class NoiseMode(StrEnum):
    PER_PARTICLE = "per_particle"
    SHARED = "shared"


class InitKind(StrEnum):
    UNIFORM_BOX = "uniform_box"
    GAUSSIAN = "gaussian"


class ObjectiveKind(StrEnum):
    RASTRIGIN = "rastrigin"
    ROTATED_RASTRIGIN = "rotated_rastrigin"
    FINITE_SUM = "finite_sum"


class ResultFormat(StrEnum):
    CSV = "csv"
    JSON = "json"


Coordinates = float | list[float]


def broadcast(value: Coordinates, dim: int, name: str) -> np.ndarray:
    array = np.asarray(value, dtype=float)
    if array.ndim == 0:
        return np.full(dim, float(array))
    if array.shape != (dim,):
        raise ConfigurationError(
            f"{name} has {array.size} coordinates, expected {dim}"
        )
    return array.copy()


class CboParams(BaseModel):
    """Algorithm parameters of one run.

    Range checks on gamma, xi and alpha are left to ``validate_params`` so that
    invalid values are reported rather than rejected at parse time.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    gamma: float = 0.1
    xi: float = 0.0056
    alpha: float = 1e4
    n_particles: int = 100
    dim: int = 1
    noise_mode: NoiseMode = NoiseMode.PER_PARTICLE
    max_iter: int = Field(1000, ge=0)
    consensus_tol: float = Field(0.0, ge=0)


class InitSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: InitKind = InitKind.UNIFORM_BOX
    lower: Coordinates = -3.0
    upper: Coordinates = 3.0
    mean: Coordinates = 0.0
    std: Coordinates = 1.0

    def box(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        lower = broadcast(self.lower, dim, "init.lower")
        upper = broadcast(self.upper, dim, "init.upper")
        degenerate = np.flatnonzero(~(lower < upper))
        if degenerate.size:
            raise ConfigurationError(
                f"init box requires lower < upper, violated at coordinates {degenerate.tolist()}"
            )
        return lower, upper

    def moments(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        mean = broadcast(self.mean, dim, "init.mean")
        std = broadcast(self.std, dim, "init.std")
        if np.any(std < 0):
            raise ConfigurationError("init.std must be nonnegative")
        return mean, std


class NoiseSpec(BaseModel):
    """Gaussian oracle levels: f + w0 + w1 * f with w_j ~ N(0, sigma_j^2)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma0: float = Field(0.0, ge=0)
    sigma1: float = Field(0.0, ge=0)

    @property
    def is_exact(self) -> bool:
        return self.sigma0 == 0 and self.sigma1 == 0


class SubsampleSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    ell: float = Field(1.0, gt=0, le=1)
    per_particle_fresh: bool = True

    @model_validator(mode="after")
    def _fresh_subsets_only(self) -> "SubsampleSpec":
        if not self.per_particle_fresh:
            raise ValueError("subsets are always drawn per particle and iteration")
        return self


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_samples: int = Field(2000, ge=1)
    dim: int = Field(7, ge=1)
    flip_prob: float = Field(0.05, ge=0, le=0.5)
    seed: int | None = None


class ObjectiveSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ObjectiveKind = ObjectiveKind.RASTRIGIN
    angle: float = math.pi / 3
    dataset: Path | None = None
    label_column: str | int = -1
    train_size: int | None = Field(None, ge=1)
    synthetic: SyntheticSpec | None = None

    @model_validator(mode="after")
    def _finite_sum_needs_data(self) -> "ObjectiveSpec":
        if self.kind == ObjectiveKind.FINITE_SUM and (
            self.dataset is None and self.synthetic is None
        ):
            raise ValueError("finite_sum objective needs objective.dataset or objective.synthetic")
        return self


class BoundsSpec(BaseModel):
    """Inputs of the closed-form evaluators behind ``cbo bounds``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    t0: float = Field(0.0, ge=0)
    t1: float = Field(0.0, ge=0)
    mf: float = Field(1.0, ge=0)
    mv_mode: str = Field("gaussian", pattern="^(generic|gaussian)$")
    eps: float = Field(1e-2, gt=0)
    tau: float = Field(0.5, gt=0, lt=1)
    v0: float | None = Field(None, gt=0)
    mh: float = Field(1.0, ge=0)
    mg: float = Field(1.0, ge=0)
    f_star: float = 0.0
    e_exp_f0: float | None = None
    eps_margin: float = Field(0.0, ge=0, lt=1)
    estimate_trials: int = Field(1000, ge=1)
    ball_radius: float | None = Field(None, gt=0)


class ExperimentConfig(BaseModel):
    """One configuration file: base parameters, objective, oracle and sweeps."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    gamma: float = 0.1
    xi: float = 0.0056
    alpha: float = 1e4
    n_particles: int = 100
    dim: int = 1
    noise_mode: NoiseMode = NoiseMode.PER_PARTICLE
    max_iter: int = Field(1000, ge=0)
    consensus_tol: float = Field(0.0, ge=0)
    seed: int = Field(0, ge=0, lt=2**64)

    init: InitSpec = InitSpec()
    objective: ObjectiveSpec = ObjectiveSpec()
    noise: NoiseSpec = NoiseSpec()
    subsample: SubsampleSpec | None = None

    runs: int = Field(1, ge=1)
    alpha_sweep: list[float] = []
    ell_sweep: list[float] = []
    noise_sweep: list[tuple[float, float]] = []
    x_star: list[float] | None = None
    report_best: bool = True

    diagnostics: bool = False
    track_errors: bool = False
    workers: int = Field(1, ge=1)
    output: Path | None = None
    format: ResultFormat = ResultFormat.CSV

    bounds: BoundsSpec = BoundsSpec()

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentConfig":
        if self.objective.kind == ObjectiveKind.ROTATED_RASTRIGIN and self.dim != 2:
            raise ValueError("rotated_rastrigin requires dim = 2")
        if self.x_star is not None and len(self.x_star) != self.dim:
            raise ValueError(f"x_star has {len(self.x_star)} coordinates, expected {self.dim}")
        if any(not 0 < ell <= 1 for ell in self.ell_sweep):
            raise ValueError("ell_sweep values must lie in (0, 1]")
        if any(alpha <= 0 for alpha in self.alpha_sweep):
            raise ValueError("alpha_sweep values must be positive")
        if any(s0 < 0 or s1 < 0 for s0, s1 in self.noise_sweep):
            raise ValueError("noise_sweep levels must be nonnegative")
        return self

    def params(self, alpha: float | None = None) -> CboParams:
        return CboParams(
            gamma=self.gamma,
            xi=self.xi,
            alpha=self.alpha if alpha is None else alpha,
            n_particles=self.n_particles,
            dim=self.dim,
            noise_mode=self.noise_mode,
            max_iter=self.max_iter,
            consensus_tol=self.consensus_tol,
        )

    def reference_point(self) -> np.ndarray | None:
        """Known minimizer used for error metrics; Rastrigin variants default to 0."""
        if self.x_star is not None:
            return np.asarray(self.x_star, dtype=float)
        if self.objective.kind in (ObjectiveKind.RASTRIGIN, ObjectiveKind.ROTATED_RASTRIGIN):
            return np.zeros(self.dim)
        return None

    def noise_cells(self) -> list[NoiseSpec]:
        if not self.noise_sweep:
            return [self.noise]
        return [NoiseSpec(sigma0=s0, sigma1=s1) for s0, s1 in self.noise_sweep]

    def alpha_cells(self) -> list[float]:
        return list(self.alpha_sweep) or [self.alpha]

    def ell_cells(self) -> list[float | None]:
        if self.objective.kind != ObjectiveKind.FINITE_SUM:
            return [None]
        if self.ell_sweep:
            return list(self.ell_sweep)
        return [self.subsample.ell if self.subsample else 1.0]
