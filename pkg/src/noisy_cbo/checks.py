"""Property suite: realized-step inequalities, Monte Carlo bounds and reproduction runs.

``property_suite`` runs the fast, deterministic-given-seed checks; ``reproduction_suite``
runs the multi-run Rastrigin and classification campaigns. ``scale`` shrinks the
number of steps, trials and runs for quick smoke runs.
"""

import math
import time
from collections.abc import Callable
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from noisy_cbo import diagnostics
from noisy_cbo.datasets import Dataset
from noisy_cbo.engine import (
    RunOptions,
    consensus_point,
    run,
    sample_diffusion,
    step,
    transition_matrix,
)
from noisy_cbo.ensemble import Ensemble, contraction_constant, init_ensemble
from noisy_cbo.harness import run_experiment
from noisy_cbo.logging_config import log
from noisy_cbo.models import (
    CboParams,
    ExperimentConfig,
    InitSpec,
    NoiseSpec,
    ObjectiveKind,
    ObjectiveSpec,
    SubsampleSpec,
    SyntheticSpec,
)
from noisy_cbo.objectives import Rastrigin, finite_sum_loss
from noisy_cbo.oracle import ExactOracle, GaussianOracle, SubsampleOracle, subset_size
from noisy_cbo.randomness import DIFFUSION, MONTE_CARLO, ORACLE, SeedSpec, run_seed

EQUIVALENCE_TOLERANCE = 1e-12
STANDARD_ERRORS = 3.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _timed(name: str, check: Callable[[], tuple[bool, str]]) -> CheckResult:
    started = time.perf_counter()
    passed, detail = check()
    result = CheckResult(name, passed, detail, time.perf_counter() - started)
    log.info("check finished", name=name, passed=passed, seconds=round(result.seconds, 2))
    return result


def _random_step_setup(
    rng: np.random.Generator, gammas: tuple[float, ...], xis: tuple[float, ...]
) -> tuple[CboParams, Ensemble]:
    params = CboParams(
        gamma=float(rng.choice(gammas)),
        xi=float(rng.choice(xis)),
        alpha=float(rng.choice([1.0, 10.0])),
        n_particles=int(rng.integers(1, 17)),
        dim=int(rng.integers(1, 5)),
    )
    positions = rng.uniform(-3.0, 3.0, size=(params.n_particles, params.dim))
    return params, Ensemble(positions, iteration=int(rng.integers(0, 1000)))


def check_matrix_equivalence(steps: int, seed: SeedSpec) -> tuple[bool, str]:
    """M^s_k y^s_k equals the particle update per component; rows of M^s_k sum to 1."""
    rng = seed.child(MONTE_CARLO, 0).generator()
    objective = Rastrigin()
    worst_gap = 0.0
    worst_row = 0.0
    for index in range(steps):
        params, ensemble = _random_step_setup(rng, (0.1, 0.5, 1.0), (0.0, 0.05, 0.1))
        fhat = objective(ensemble.positions) + rng.normal(0.0, 0.1, params.n_particles)
        cp = consensus_point(ensemble.positions, fhat, params.alpha)
        draw = sample_diffusion(params, seed.child(DIFFUSION, index))
        after = step(ensemble, cp, params.gamma, draw)
        for s in range(params.dim):
            matrix = transition_matrix(cp.weights, params.gamma, draw, s)
            gap = np.abs(matrix @ ensemble.component(s) - after.component(s)).max()
            worst_gap = max(worst_gap, float(gap))
            worst_row = max(worst_row, float(np.abs(matrix.sum(axis=1) - 1.0).max()))
    passed = worst_gap <= EQUIVALENCE_TOLERANCE and worst_row <= EQUIVALENCE_TOLERANCE
    return passed, (
        f"{steps} steps, max |My - step| = {worst_gap:.2e}, "
        f"max |row sum - 1| = {worst_row:.2e}"
    )


def check_step_bounds(steps: int, seed: SeedSpec) -> tuple[bool, str]:
    """Contraction, ergodicity lower bound and consensus-gap bound on realized noisy steps."""
    rng = seed.child(MONTE_CARLO, 1).generator()
    oracle = GaussianOracle(Rastrigin(), NoiseSpec(sigma0=0.1, sigma1=0.05))
    failures = 0
    for index in range(steps):
        params, ensemble = _random_step_setup(rng, (0.1, 0.5), (0.0, 0.05))
        batch = oracle.evaluate(ensemble.positions, seed.child(ORACLE, index), with_exact=True)
        noisy = consensus_point(ensemble.positions, batch.values, params.alpha)
        exact = consensus_point(ensemble.positions, batch.exact_values, params.alpha)
        draw = sample_diffusion(params, seed.child(DIFFUSION, index))
        after = step(ensemble, noisy, params.gamma, draw)
        matrices = [
            transition_matrix(noisy.weights, params.gamma, draw, s) for s in range(params.dim)
        ]
        report = diagnostics.step_bound_monitor(
            ensemble,
            after,
            matrices,
            draw,
            params.gamma,
            exact.point,
            noisy.point,
            params.alpha,
            float(batch.errors.max()),
        )
        failures += not report.all_ok
    return failures == 0, f"{steps} steps, {failures} with a violated bound"


def check_max_moments(trials: int, seed: SeedSpec) -> tuple[bool, str]:
    worst = 0.0
    cells = 0
    passed = True
    for n in (1, 10, 100):
        for xi in (0.0056, 0.1, 1.0):
            cell_seed = seed.child(MONTE_CARLO, 3, cells)
            report = diagnostics.gaussian_max_moment_check(n, xi, trials, cell_seed)
            passed &= report.ok
            worst = max(worst, report.empirical_second / report.bound_second)
            cells += 1
    return passed, f"{cells} cells x {trials} trials, worst second-moment ratio {worst:.3f}"


def check_subsampling(seed: SeedSpec) -> tuple[bool, str]:
    """Subset-mean enumeration is unbiased; the ledger charges iterations N ceil(ell M)."""
    rng = seed.child(MONTE_CARLO, 2).generator()
    worst = 0.0
    for n_samples in range(1, 7):
        dataset = Dataset(
            rng.normal(size=(n_samples, 3)), rng.integers(0, 2, size=n_samples).astype(float)
        )
        x = rng.normal(size=3)
        full = finite_sum_loss(x, dataset)
        for size in range(1, n_samples + 1):
            means = [
                finite_sum_loss(x, dataset, subset)
                for subset in combinations(range(n_samples), size)
            ]
            worst = max(worst, abs(float(np.mean(means)) - full) / max(abs(full), 1e-300))

    dataset = Dataset(rng.normal(size=(6, 2)), np.array([0, 1, 0, 1, 1, 0], dtype=float))
    spec = SubsampleSpec(ell=0.5)
    params = CboParams(gamma=0.5, xi=0.05, alpha=10.0, n_particles=5, dim=2, max_iter=7)
    record = run(params, SubsampleOracle(dataset, spec), InitSpec(), seed)
    expected = 7 * 5 * subset_size(0.5, 6)
    ledger_ok = record.ledger.component_evals == expected
    passed = worst <= 1e-14 and ledger_ok
    return passed, (
        f"max relative bias {worst:.1e}, ledger {record.ledger.component_evals} vs {expected}"
    )


def check_diameter_decay(runs: int, seed: SeedSpec) -> tuple[bool, str]:
    """Mean component diameter at k in {10, 50, 100} stays below theta^k times its initial mean."""
    params = CboParams(gamma=0.1, xi=0.0056, alpha=10.0, n_particles=100, dim=1, max_iter=100)
    theta = contraction_constant(params.gamma, params.xi, params.n_particles)
    oracle = ExactOracle(Rastrigin())
    diameters = []
    for r in range(runs):
        run_stream = run_seed(seed.master_seed, r)
        record = run(params, oracle, InitSpec(), run_stream, RunOptions(diagnostics=True))
        diameters.append(record.diagnostics_frame()["diam_0"].to_numpy())
    means = np.mean(diameters, axis=0)
    checkpoints = (10, 50, 100)
    ok = all(
        means[k] <= diagnostics.expected_diameter_bound(theta, k, means[0]) for k in checkpoints
    )
    detail = ", ".join(f"k={k}: {means[k]:.2e}" for k in checkpoints)
    return ok, f"{runs} runs, theta = {theta:.5f}, initial {means[0]:.2e}, {detail}"


def check_vk_recursion(runs: int, seed: SeedSpec, iterations: int = 20) -> tuple[bool, str]:
    """Empirical E[V_{k+1}] against the one-step bound.

    The bound is fed with the empirical E[V_k] and E||xhat_k - x*||^2 of the same runs.
    """
    runs = max(runs, 2)
    params = CboParams(gamma=0.1, xi=0.05, alpha=10.0, n_particles=50, dim=2)
    oracle = GaussianOracle(Rastrigin(), NoiseSpec(sigma0=0.1))
    x_star = np.zeros(params.dim)
    vk = np.zeros((runs, iterations + 1))
    cp_sq = np.zeros((runs, iterations))
    for r in range(runs):
        run_stream = run_seed(seed.master_seed, r)
        ensemble = init_ensemble(InitSpec(lower=-2.0, upper=2.0), params, run_stream)
        vk[r, 0] = diagnostics.mean_squared_distance(ensemble, x_star)
        for k in range(iterations):
            batch = oracle.evaluate(ensemble.positions, run_stream.child(ORACLE, k))
            cp = consensus_point(ensemble.positions, batch.values, params.alpha)
            cp_sq[r, k] = float(np.sum((cp.point - x_star) ** 2))
            draw = sample_diffusion(params, run_stream.child(DIFFUSION, k))
            ensemble = step(ensemble, cp, params.gamma, draw)
            vk[r, k + 1] = diagnostics.mean_squared_distance(ensemble, x_star)

    violations = 0
    for k in range(iterations):
        bound = diagnostics.vk_recursion_rhs(
            params.gamma, params.xi, vk[:, k].mean(), cp_sq[:, k].mean()
        )
        slack = STANDARD_ERRORS * vk[:, k + 1].std(ddof=1) / math.sqrt(runs)
        violations += vk[:, k + 1].mean() > bound + slack
    return violations == 0, f"{runs} runs x {iterations} steps, {violations} violated steps"


def check_closed_forms() -> tuple[bool, str]:
    theta = contraction_constant(0.1, 0.0056, 100)
    schedule = diagnostics.complexity_schedule(1e-2, 0.5, 0.1, 0.0056, 1.0, 100)
    k = diagnostics.k_star(0.9, 1.0, 0.01)
    mv = diagnostics.mv_bound(1.0, 0.0, 0.0, 100, "gaussian")
    constants = diagnostics.theory_constants(1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, None, 0.0, 1)
    passed = (
        theta < 1
        and abs(schedule.mu - 0.90501568) < 1e-8
        and k == 44
        and abs(mv - 4.450503) < 1e-5
        and abs(constants.gamma_a - 1.0) < 1e-12
        and abs(constants.gamma_b - 1.0) < 1e-12
    )
    return passed, f"theta = {theta:.6f}, mu = {schedule.mu:.6f}, k* = {k}, M_v = {mv:.4f}"


def property_suite(seed: int = 0, scale: float = 1.0) -> list[CheckResult]:
    base = SeedSpec(seed)

    def sized(full: int) -> int:
        return max(1, int(full * scale))

    return [
        _timed("matrix/particle equivalence", lambda: check_matrix_equivalence(sized(1000), base)),
        _timed("per-step bounds", lambda: check_step_bounds(sized(10_000), base)),
        _timed("gaussian max moments", lambda: check_max_moments(sized(100_000), base)),
        _timed("subsampling unbiasedness", lambda: check_subsampling(base)),
        _timed("expected diameter decay", lambda: check_diameter_decay(sized(200), base)),
        _timed("V_k one-step recursion", lambda: check_vk_recursion(sized(500), base)),
        _timed("closed-form evaluators", check_closed_forms),
    ]


def _rastrigin_config(runs: int, seed: int, **overrides: object) -> ExperimentConfig:
    values = {
        "gamma": 0.1,
        "xi": 0.0056,
        "alpha": 1e4,
        "n_particles": 100,
        "dim": 1,
        "max_iter": 1000,
        "runs": runs,
        "seed": seed,
        "report_best": False,
    }
    values.update(overrides)
    return ExperimentConfig(**values)


def check_noise_free_reproduction(runs: int, seed: int) -> tuple[bool, str]:
    row = run_experiment(_rastrigin_config(runs, seed))[0]
    return row.mean <= 1e-3 and row.p90 <= 5e-3, f"mean err {row.mean:.2e}, p90 {row.p90:.2e}"


def check_absolute_noise_reproduction(runs: int, seed: int) -> tuple[bool, str]:
    row = run_experiment(_rastrigin_config(runs, seed, alpha=10.0, noise=NoiseSpec(sigma0=0.1)))[0]
    return row.mean <= 1e-2, f"mean err {row.mean:.2e}"


def check_relative_noise_ordering(runs: int, seed: int) -> tuple[bool, str]:
    config = _rastrigin_config(
        runs,
        seed,
        alpha_sweep=[1e4, 10.0, 1.0, 0.1],
        noise_sweep=[(0.0, 0.1), (0.0, 0.5)],
        report_best=True,
    )
    best = {row.sigma1: row for row in run_experiment(config) if row.row_kind == "best"}
    low, high = best[0.1].mean, best[0.5].mean
    return high >= 10 * low, f"best mean err sigma1=0.1: {low:.2e}, sigma1=0.5: {high:.2e}"


def check_classification(runs: int, seed: int) -> tuple[bool, str]:
    config = ExperimentConfig(
        gamma=0.1,
        xi=0.0056,
        alpha=1e3,
        n_particles=200,
        dim=7,
        max_iter=20_000,
        consensus_tol=1e-3,
        seed=seed,
        runs=runs,
        init=InitSpec(lower=-1e3, upper=1e3),
        objective=ObjectiveSpec(
            kind=ObjectiveKind.FINITE_SUM,
            train_size=1500,
            synthetic=SyntheticSpec(n_samples=2000, dim=7, flip_prob=0.05),
        ),
        ell_sweep=[1.0, 0.25],
    )
    rows = {row.ell: row for row in run_experiment(config)}
    full, sampled = rows[1.0], rows[0.25]
    passed = (
        full.mean >= 0.90
        and abs(full.mean - sampled.mean) <= 0.02
        and full.mean_cost >= 3 * sampled.mean_cost
    )
    return passed, (
        f"accuracy {full.mean:.3f} vs {sampled.mean:.3f}, "
        f"cost {full.mean_cost:.3e} vs {sampled.mean_cost:.3e}"
    )


def reproduction_suite(seed: int = 0, scale: float = 1.0) -> list[CheckResult]:
    def sized(full: int) -> int:
        return max(1, int(full * scale))

    return [
        _timed(
            "rastrigin d=1 noise-free", lambda: check_noise_free_reproduction(sized(100), seed)
        ),
        _timed(
            "rastrigin d=1 absolute noise",
            lambda: check_absolute_noise_reproduction(sized(100), seed),
        ),
        _timed(
            "relative noise degradation", lambda: check_relative_noise_ordering(sized(100), seed)
        ),
        _timed("synthetic classification", lambda: check_classification(sized(20), seed)),
    ]
