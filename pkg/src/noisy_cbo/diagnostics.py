"""Quantities of the convergence analysis and checks of its inequalities on realized runs.

Deterministic inequalities (they hold exactly for every realized step) are
checked with an absolute slack of ``STEP_TOLERANCE`` to absorb floating point
accumulation. Expectation-level statements are checked elsewhere with explicit
standard-error slack (see ``noisy_cbo.checks``).
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum

import numpy as np

from noisy_cbo.engine import DiffusionDraw, ShapeError, consensus_point
from noisy_cbo.ensemble import Ensemble, contraction_constant, init_ensemble
from noisy_cbo.models import CboParams, ConfigurationError, InitSpec
from noisy_cbo.objectives import Objective
from noisy_cbo.randomness import MONTE_CARLO, SeedSpec

STEP_TOLERANCE = 1e-10


class MvMode(StrEnum):
    GENERIC = "generic"
    GAUSSIAN = "gaussian"


def diameter(y: Sequence[float] | np.ndarray) -> float:
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ShapeError("diameter of an empty vector")
    return float(y.max() - y.min())


def ergodicity(matrix: np.ndarray) -> float:
    """min over row pairs (i, l) of sum_j min(M_ij, M_lj)."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"ergodicity needs a square matrix, got {matrix.shape}")
    overlaps = np.minimum(matrix[:, None, :], matrix[None, :, :]).sum(axis=2)
    return float(overlaps.min())


def mean_squared_distance(
    ensemble: Ensemble, x_star: Sequence[float] | np.ndarray
) -> float:
    x_star = np.asarray(x_star, dtype=float)
    if x_star.shape != (ensemble.dim,):
        raise ShapeError(f"x_star {x_star.shape} vs dimension {ensemble.dim}")
    return float(np.mean(np.sum((ensemble.positions - x_star) ** 2, axis=1)))


@dataclass(frozen=True, eq=False)
class StepBoundReport:
    diam_before: np.ndarray
    diam_after: np.ndarray
    erg: np.ndarray
    eta_max: np.ndarray
    consensus_gap: np.ndarray
    gap_bound: np.ndarray
    gamma: float

    @property
    def contraction_ok(self) -> np.ndarray:
        return self.diam_after <= (1.0 - self.erg) * self.diam_before + STEP_TOLERANCE

    @property
    def erg_bound_ok(self) -> np.ndarray:
        return self.erg >= self.gamma - 4.0 * self.eta_max - STEP_TOLERANCE

    @property
    def gap_bound_ok(self) -> np.ndarray:
        return self.consensus_gap <= self.gap_bound + STEP_TOLERANCE

    @property
    def all_ok(self) -> bool:
        return bool(
            self.contraction_ok.all() and self.erg_bound_ok.all() and self.gap_bound_ok.all()
        )


def step_bound_monitor(
    before: Ensemble,
    after: Ensemble,
    matrices: Sequence[np.ndarray],
    draw: DiffusionDraw,
    gamma: float,
    exact_cp: np.ndarray,
    noisy_cp: np.ndarray,
    alpha: float,
    err_inf: float,
) -> StepBoundReport:
    """Per-component contraction, ergodicity and consensus-gap bounds of one realized step."""
    if before.positions.shape != after.positions.shape:
        raise ShapeError(f"ensembles {before.positions.shape} vs {after.positions.shape}")
    if after.iteration != before.iteration + 1:
        raise ShapeError(
            f"expected consecutive iterations, got {before.iteration} and {after.iteration}"
        )
    if len(matrices) != before.dim or draw.eta.shape != before.positions.shape:
        raise ShapeError("need one transition matrix and one diffusion column per component")

    diam_before = np.ptp(before.positions, axis=0)
    return StepBoundReport(
        diam_before=diam_before,
        diam_after=np.ptp(after.positions, axis=0),
        erg=np.array([ergodicity(matrix) for matrix in matrices]),
        eta_max=np.abs(draw.eta).max(axis=0),
        consensus_gap=np.abs(np.asarray(exact_cp) - np.asarray(noisy_cp)),
        gap_bound=alpha * err_inf * diam_before,
        gamma=gamma,
    )


@dataclass(frozen=True)
class MaxMomentReport:
    empirical_first: float
    empirical_second: float
    bound_first: float
    bound_second: float
    trials: int

    @property
    def ok(self) -> bool:
        return (
            self.empirical_first <= self.bound_first
            and self.empirical_second <= self.bound_second
        )


def gaussian_max_moment_check(
    n: int, xi: float, trials: int, seed: SeedSpec, *, chunk_size: int = 1_000_000
) -> MaxMomentReport:
    """Monte Carlo E[max_i |eta_i|] and E[max_i eta_i^2] for N i.i.d. N(0, xi^2) draws."""
    if trials < 1 or n < 1:
        raise ConfigurationError("trials and n must be at least 1")
    rng = seed.generator()
    rows_per_chunk = max(1, chunk_size // n)
    first = 0.0
    second = 0.0
    remaining = trials
    while remaining:
        rows = min(rows_per_chunk, remaining)
        maxima = np.abs(rng.normal(0.0, xi, size=(rows, n))).max(axis=1)
        first += float(maxima.sum())
        second += float((maxima**2).sum())
        remaining -= rows
    log_term = math.log(math.sqrt(2.0) * n)
    return MaxMomentReport(
        empirical_first=first / trials,
        empirical_second=second / trials,
        bound_first=2.0 * xi * math.sqrt(log_term),
        bound_second=4.0 * xi**2 * log_term,
        trials=trials,
    )


def mv_bound(
    t0: float, t1: float, mf: float, n: int, mode: MvMode | str = MvMode.GAUSSIAN
) -> float:
    """Bound M_v on E[||E_k||_inf^2]^(1/2) under the noise growth t0 + t1 f^2 with f <= mf."""
    if min(t0, t1, mf) < 0 or n < 1:
        raise ConfigurationError("t0, t1, mf must be nonnegative and n at least 1")
    level = math.sqrt(t0 + t1 * mf**2)
    if MvMode(mode) == MvMode.GENERIC:
        return math.sqrt(n) * level
    return 2.0 * level * math.sqrt(math.log(math.sqrt(2.0) * n))


@dataclass(frozen=True)
class LaplaceReport:
    lhs: float
    rhs: float
    in_ball: int
    case: str
    satisfied: bool


def ball_max(
    objective: Objective,
    center: Sequence[float] | np.ndarray,
    r: float,
    points_per_dim: int = 1000,
) -> float:
    """f_r: the maximum of f over the closed ball B_r(center), sampled on a dense grid.

    Only d <= 2 is supported; in d = 2 grid points outside the disc are dropped.
    """
    center = np.asarray(center, dtype=float).ravel()
    dim = center.size
    if dim not in (1, 2):
        raise ConfigurationError(f"ball_max samples d = 1 or d = 2, got d = {dim}")
    if r <= 0 or points_per_dim < 2:
        raise ConfigurationError("r must be positive and points_per_dim at least 2")
    axis = np.linspace(-r, r, points_per_dim)
    if dim == 1:
        offsets = axis[:, None]
    else:
        grid = np.stack(np.meshgrid(axis, axis), axis=-1).reshape(-1, 2)
        offsets = grid[np.linalg.norm(grid, axis=1) <= r]
    points = np.vstack([center, center + offsets])
    return float(np.max(objective(points)))


def laplace_gap_bound(
    ensemble: Ensemble,
    fvals_exact: np.ndarray,
    x_star: Sequence[float] | np.ndarray,
    alpha: float,
    beta: float,
    nu: float,
    q: float,
    f_r: float,
    r: float,
) -> LaplaceReport:
    """Bound ||x^alpha - x*|| by occupancy of the ball B_r around x*.

    Case "a" applies when at least one particle lies in B_r, case "b" otherwise.
    """
    if beta <= 0 or nu <= 0 or q <= 0 or r <= 0:
        raise ConfigurationError("beta, nu, q and r must be positive")
    x_star = np.asarray(x_star, dtype=float)
    fvals_exact = np.asarray(fvals_exact, dtype=float)
    distances = np.linalg.norm(ensemble.positions - x_star, axis=1)
    in_ball = int(np.count_nonzero(distances <= r))

    exact_cp = consensus_point(ensemble.positions, fvals_exact, alpha).point
    lhs = float(np.linalg.norm(exact_cp - x_star))
    head = (q + f_r) ** nu / beta
    with np.errstate(over="ignore"):
        if in_ball > 0:
            case = "a"
            tail = math.exp(-alpha * q) / in_ball * float(distances.sum())
        else:
            case = "b"
            tail = float(np.exp(alpha * (fvals_exact.max() - q))) * float(distances.mean())
    rhs = head + tail
    return LaplaceReport(
        lhs=lhs, rhs=rhs, in_ball=in_ball, case=case, satisfied=lhs <= rhs + STEP_TOLERANCE
    )


@dataclass(frozen=True)
class ComplexitySchedule:
    mu: float
    sigma_hat: float
    k_star: int
    theta: float
    gap: float


def k_star(mu: float, v0: float, eps: float) -> int:
    """Smallest k with mu^k v0 <= eps."""
    if not 0 < mu < 1:
        raise ConfigurationError(f"mu must lie in (0, 1), got {mu}")
    if v0 <= eps:
        return 0
    return math.ceil(round(math.log(v0 / eps) / math.log(1.0 / mu), 9))


def complexity_schedule(
    eps: float, tau: float, gamma: float, xi: float, v0: float, n: int
) -> ComplexitySchedule:
    if eps <= 0 or not 0 < tau < 1:
        raise ConfigurationError("eps must be positive and tau in (0, 1)")
    gap = 1.0 - (1.0 - gamma) ** 2 - xi**2
    if gap <= 0:
        raise ConfigurationError(f"contraction gap 1 - (1 - gamma)^2 - xi^2 = {gap:.6g} <= 0")
    spread = gamma**2 + xi**2
    mu = 1.0 - (1.0 - tau) * gap
    sigma_hat = min(
        tau / 4.0 * gap / (spread + math.sqrt(spread)),
        math.sqrt(tau / 2.0 * gap / spread),
    )
    return ComplexitySchedule(
        mu=mu,
        sigma_hat=sigma_hat,
        k_star=k_star(mu, v0, eps),
        theta=contraction_constant(gamma, xi, n),
        gap=gap,
    )


def noise_tolerance_bound(
    sigma_hat: float, eps: float, alpha: float, theta: float, k_bar: int, d0: float
) -> float:
    """Largest M_v for which the complexity estimate applies: M_v < this value."""
    if d0 <= 0:
        return math.inf
    return (
        sigma_hat * math.sqrt(eps) * (math.sqrt(3.0) - 1.0)
        / (2.0 * alpha * theta**k_bar * math.sqrt(d0))
    )


@dataclass(frozen=True)
class TheoryConstants:
    gamma_a: float
    gamma_b: float
    theta: float
    rhs: float | None
    condition_holds: bool | None


def theory_constants(
    mh: float,
    mg: float,
    gamma: float,
    xi: float,
    alpha: float,
    mv: float,
    d0: float,
    f_star: float,
    e_exp_f0: float | None,
    eps_margin: float,
    n_particles: int,
) -> TheoryConstants:
    """Gamma_A, Gamma_B and the initial-distribution condition on E[exp(-alpha f(x_0))].

    The condition needs theta < 1; otherwise ``rhs`` and ``condition_holds`` are None.
    """
    gamma_a = mh * math.sqrt(1.0 + (1.0 - gamma) ** 2 + xi**2) * math.sqrt(gamma**2 + xi**2) * d0
    gamma_b = mg * (gamma * alpha * mv + xi) * math.sqrt(d0)
    theta = contraction_constant(gamma, xi, n_particles)
    if theta >= 1:
        return TheoryConstants(gamma_a, gamma_b, theta, rhs=None, condition_holds=None)

    scale = alpha * math.exp(-alpha * f_star)
    rhs = scale * gamma_a / (1.0 - math.exp(-2.0 * (1.0 - theta))) + scale * gamma_b / (
        1.0 - math.exp(-(1.0 - theta))
    )
    holds = None if e_exp_f0 is None else (1.0 - eps_margin) * e_exp_f0 >= rhs
    return TheoryConstants(gamma_a, gamma_b, theta, rhs=rhs, condition_holds=holds)


def estimate_d0(init: InitSpec, params: CboParams, seed: SeedSpec, trials: int) -> float:
    """Monte Carlo mean of sum_s diam(y^s_0)^2 over independent initial ensembles."""
    if trials < 1:
        raise ConfigurationError("trials must be at least 1")
    total = 0.0
    for trial in range(trials):
        ensemble = init_ensemble(init, params, seed.child(MONTE_CARLO, trial))
        total += float(np.sum(np.ptp(ensemble.positions, axis=0) ** 2))
    return total / trials


def vk_recursion_rhs(gamma: float, xi: float, mean_vk: float, mean_cp_sq: float) -> float:
    """Upper bound on E[V_{k+1}] from E[V_k] and E[||xhat_k - x*||^2]."""
    spread = gamma**2 + xi**2
    return (
        (1.0 - 2.0 * gamma + spread) * mean_vk
        + spread * mean_cp_sq
        + 2.0 * (spread + math.sqrt(spread)) * math.sqrt(mean_vk) * math.sqrt(mean_cp_sq)
    )


def expected_diameter_bound(theta: float, k: int, mean_diam0: float) -> float:
    return theta**k * mean_diam0


def estimate_v0(
    init: InitSpec,
    params: CboParams,
    x_star: Sequence[float] | np.ndarray,
    seed: SeedSpec,
    trials: int,
) -> float:
    """Monte Carlo mean of V_0 = (1/N) sum_i ||x^i_0 - x*||^2."""
    if trials < 1:
        raise ConfigurationError("trials must be at least 1")
    total = 0.0
    for trial in range(trials):
        ensemble = init_ensemble(init, params, seed.child(MONTE_CARLO, trial))
        total += mean_squared_distance(ensemble, x_star)
    return total / trials
