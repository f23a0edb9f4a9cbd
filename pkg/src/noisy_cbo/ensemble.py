import math
from dataclasses import dataclass, field

import numpy as np

from noisy_cbo.models import CboError, CboParams, ConfigurationError, InitKind, InitSpec, NoiseMode
from noisy_cbo.randomness import INIT, SeedSpec


class NonFiniteEnsembleError(CboError):
    """Raised when a particle coordinate becomes NaN or infinite."""

    def __init__(self, iteration: int, rows: list[int]) -> None:
        super().__init__(
            f"non-finite particle positions at iteration {iteration} (particles {rows[:10]})"
        )
        self.iteration = iteration
        self.rows = rows


@dataclass(frozen=True)
class Ensemble:
    """Particle positions x^i_k as an N x d array; column s is the component vector y^s_k."""

    positions: np.ndarray
    iteration: int = 0

    def __post_init__(self) -> None:
        positions = np.array(self.positions, dtype=float)
        if positions.ndim != 2 or 0 in positions.shape:
            raise ValueError(f"positions must be a nonempty N x d array, got {positions.shape}")
        if self.iteration < 0:
            raise ValueError("iteration must be nonnegative")
        bad_rows = np.flatnonzero(~np.isfinite(positions).all(axis=1))
        if bad_rows.size:
            raise NonFiniteEnsembleError(self.iteration, bad_rows.tolist())
        positions.flags.writeable = False
        object.__setattr__(self, "positions", positions)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def component(self, s: int) -> np.ndarray:
        return self.positions[:, s]


@dataclass(frozen=True)
class ValidationReport:
    theta: float
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def raise_for_errors(self) -> None:
        if self.errors:
            raise ConfigurationError("; ".join(self.errors))


def contraction_constant(gamma: float, xi: float, n_particles: int) -> float:
    return 1.0 - gamma + 8.0 * xi * math.sqrt(math.log(math.sqrt(2.0) * n_particles))


def validate_params(params: CboParams) -> ValidationReport:
    errors = []
    warnings = []
    if not 0 < params.gamma <= 1:
        errors.append(f"gamma must lie in (0, 1], got {params.gamma}")
    if params.xi < 0:
        errors.append(f"xi must be nonnegative, got {params.xi}")
    if params.alpha <= 0:
        errors.append(f"alpha must be positive, got {params.alpha}")
    if params.n_particles < 1:
        errors.append(f"n_particles must be at least 1, got {params.n_particles}")
    if params.dim < 1:
        errors.append(f"dim must be at least 1, got {params.dim}")

    theta = (
        contraction_constant(params.gamma, params.xi, params.n_particles)
        if params.n_particles >= 1
        else math.nan
    )
    if theta >= 1:
        warnings.append(f"theta = {theta:.6g} >= 1: consensus is not guaranteed")
    if params.noise_mode == NoiseMode.SHARED:
        shared_rate = (1 - params.gamma) ** 2 + params.xi**2
        if shared_rate >= 1:
            warnings.append(
                f"(1 - gamma)^2 + xi^2 = {shared_rate:.6g} >= 1: "
                "shared-noise consensus is not guaranteed"
            )
    return ValidationReport(theta=theta, errors=errors, warnings=warnings)


def init_ensemble(init: InitSpec, params: CboParams, seed: SeedSpec) -> Ensemble:
    validate_params(params).raise_for_errors()
    shape = (params.n_particles, params.dim)
    rng = seed.child(INIT).generator()
    if init.kind == InitKind.UNIFORM_BOX:
        lower, upper = init.box(params.dim)
        positions = lower + (upper - lower) * rng.random(shape)
    else:
        mean, std = init.moments(params.dim)
        positions = mean + std * rng.standard_normal(shape)
    return Ensemble(positions, iteration=0)
