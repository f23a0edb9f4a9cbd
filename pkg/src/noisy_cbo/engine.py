"""Particle dynamics of consensus-based optimization with a noisy oracle.

One iteration evaluates the oracle at all N particles, forms the Gibbs-weighted
consensus point from the noisy values, draws the component-wise diffusion
multipliers and moves every coordinate toward the consensus point:

    x'_s = x_s + (gamma + eta_s) (xhat_s - x_s)

Per iteration the random draws happen in a fixed order (oracle stream, then
diffusion stream), each from its own keyed generator, so a run is a pure
function of its configuration and seed.
"""

import math
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

import numpy as np
import pandas as pd
from scipy.special import softmax

from noisy_cbo.ensemble import Ensemble, init_ensemble, validate_params
from noisy_cbo.logging_config import log
from noisy_cbo.models import CboError, CboParams, InitSpec, NoiseMode
from noisy_cbo.oracle import CostLedger, Oracle, OracleError, cost
from noisy_cbo.randomness import DIFFUSION, ORACLE, SeedSpec


class ShapeError(CboError):
    """Raised when array shapes of cooperating inputs disagree."""


class NonFiniteValuesError(OracleError):
    """Raised when the oracle returns NaN or infinite values inside a run."""

    def __init__(self, iteration: int, rows: list[int]) -> None:
        super().__init__(
            f"non-finite oracle values at iteration {iteration} (particles {rows[:10]})"
        )
        self.iteration = iteration
        self.rows = rows


class Termination(StrEnum):
    MAX_ITER = "max_iter"
    CONSENSUS_TOL = "consensus_tol"


@dataclass(frozen=True, eq=False)
class ConsensusPoint:
    point: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class DiffusionDraw:
    eta: np.ndarray
    mode: NoiseMode


@dataclass(frozen=True)
class RunOptions:
    diagnostics: bool = False
    x_star: np.ndarray | None = None
    track_errors: bool = False


@dataclass(frozen=True, eq=False)
class RunRecord:
    final_ensemble: Ensemble
    final_consensus: ConsensusPoint
    iterations: int
    termination: Termination
    ledger: CostLedger
    diagnostics: list[dict[str, float]] = field(default_factory=list)

    def diagnostics_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.diagnostics)

    def to_dict(self) -> dict[str, Any]:
        return {
            "iterations": self.iterations,
            "termination": str(self.termination),
            "consensus_point": self.final_consensus.point.tolist(),
            "consensus_weights": self.final_consensus.weights.tolist(),
            "final_positions": self.final_ensemble.positions.tolist(),
            "final_stopping_metric": stopping_metric(self.final_ensemble),
            "ledger": {
                "iterations": self.ledger.iterations,
                "component_evals": self.ledger.component_evals,
                "cost": self.ledger.cost,
            },
        }


def consensus_point(
    positions: np.ndarray, fhat: np.ndarray, alpha: float
) -> ConsensusPoint:
    positions = np.asarray(positions, dtype=float)
    fhat = np.asarray(fhat, dtype=float)
    if positions.ndim != 2 or fhat.shape != (positions.shape[0],):
        raise ShapeError(
            f"positions {positions.shape} and oracle values {fhat.shape} disagree"
        )
    if not np.isfinite(fhat).all():
        raise OracleError("oracle returned non-finite values")
    # softmax subtracts the max of -alpha * fhat, i.e. shifts by min fhat
    weights = softmax(-alpha * fhat)
    if not np.isfinite(weights).all():
        raise OracleError(f"consensus weights overflowed for alpha = {alpha}")
    point = np.clip(weights @ positions, positions.min(axis=0), positions.max(axis=0))
    return ConsensusPoint(point=point, weights=weights)


def sample_diffusion(params: CboParams, seed: SeedSpec) -> DiffusionDraw:
    rng = seed.generator()
    shape = (params.n_particles, params.dim)
    if params.noise_mode == NoiseMode.SHARED:
        eta = np.tile(rng.normal(0.0, params.xi, params.dim), (params.n_particles, 1))
    else:
        eta = rng.normal(0.0, params.xi, shape)
    return DiffusionDraw(eta=eta, mode=params.noise_mode)


def step(
    ensemble: Ensemble, cp: ConsensusPoint, gamma: float, draw: DiffusionDraw
) -> Ensemble:
    positions = ensemble.positions
    if draw.eta.shape != positions.shape:
        raise ShapeError(f"diffusion draw {draw.eta.shape} vs ensemble {positions.shape}")
    if cp.point.shape != (positions.shape[1],):
        raise ShapeError(f"consensus point {cp.point.shape} vs dimension {positions.shape[1]}")
    rate = gamma + draw.eta
    return Ensemble((1.0 - rate) * positions + rate * cp.point, ensemble.iteration + 1)


def transition_matrix(
    weights: np.ndarray, gamma: float, draw: DiffusionDraw, s: int
) -> np.ndarray:
    """M^s_k = (1 - gamma) I + gamma V - D^s (I - V), with y^s_{k+1} = M^s_k y^s_k."""
    weights = np.asarray(weights, dtype=float)
    rate = gamma + draw.eta[:, s]
    if rate.shape != weights.shape:
        raise ShapeError(f"weights {weights.shape} vs diffusion column {rate.shape}")
    return np.diag(1.0 - rate) + np.outer(rate, weights)


def stopping_metric(ensemble: Ensemble) -> float:
    positions = ensemble.positions
    return float(np.linalg.norm(positions - positions.mean(axis=0), axis=1).mean())


def run(
    params: CboParams,
    oracle: Oracle,
    init: InitSpec,
    seed: SeedSpec,
    options: RunOptions | None = None,
) -> RunRecord:
    run_options = options or RunOptions()
    report = validate_params(params)
    report.raise_for_errors()
    for warning in report.warnings:
        log.debug("parameter warning", detail=warning)

    ensemble = init_ensemble(init, params, seed)
    # evals_per_call is already ceil(ell M), so it stands in for M at ell = 1
    per_step_cost = float(cost(1, params.dim, 1.0, oracle.evals_per_call))
    with_exact = run_options.diagnostics and run_options.track_errors
    consensus = None
    component_evals = 0
    termination = Termination.MAX_ITER
    rows = []
    if run_options.diagnostics:
        initial_err = math.nan if run_options.track_errors else None
        rows.append(_diagnostic_row(ensemble, run_options.x_star, initial_err, 0.0))

    while ensemble.iteration < params.max_iter:
        k = ensemble.iteration
        batch = oracle.evaluate(ensemble.positions, seed.child(ORACLE, k), with_exact=with_exact)
        bad_rows = np.flatnonzero(~np.isfinite(batch.values))
        if bad_rows.size:
            raise NonFiniteValuesError(k, bad_rows.tolist())
        component_evals += batch.component_evals
        consensus = consensus_point(ensemble.positions, batch.values, params.alpha)
        draw = sample_diffusion(params, seed.child(DIFFUSION, k))
        ensemble = step(ensemble, consensus, params.gamma, draw)
        metric = stopping_metric(ensemble)

        if run_options.diagnostics:
            errors = batch.errors
            row = _diagnostic_row(
                ensemble,
                run_options.x_star,
                None if errors is None else float(errors.max()),
                ensemble.iteration * per_step_cost,
            )
            rows.append(row)
            log.debug("iteration", **row)

        if params.consensus_tol > 0 and metric <= params.consensus_tol:
            termination = Termination.CONSENSUS_TOL
            break

    if consensus is None:
        # no step taken: report the consensus point of the initial ensemble, uncharged
        batch = oracle.evaluate(ensemble.positions, seed.child(ORACLE, 0))
        consensus = consensus_point(ensemble.positions, batch.values, params.alpha)

    return RunRecord(
        final_ensemble=ensemble,
        final_consensus=consensus,
        iterations=ensemble.iteration,
        termination=termination,
        ledger=CostLedger(
            iterations=ensemble.iteration,
            component_evals=component_evals,
            cost=ensemble.iteration * per_step_cost,
        ),
        diagnostics=rows,
    )


def _diagnostic_row(
    ensemble: Ensemble,
    x_star: np.ndarray | None,
    err_inf: float | None,
    cost_so_far: float,
) -> dict[str, float]:
    positions = ensemble.positions
    row: dict[str, float] = {
        "iter": ensemble.iteration,
        "stopping_metric": stopping_metric(ensemble),
    }
    for s, spread in enumerate(np.ptp(positions, axis=0)):
        row[f"diam_{s}"] = float(spread)
    if x_star is not None:
        row["V_k"] = float(np.mean(np.sum((positions - x_star) ** 2, axis=1)))
    if err_inf is not None:
        row["oracle_err_inf"] = err_inf
    row["cost_so_far"] = cost_so_far
    return row
