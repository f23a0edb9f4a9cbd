import json
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from itertools import product
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from noisy_cbo.datasets import Dataset, accuracy, load_dataset, split_dataset, synthetic_dataset
from noisy_cbo.engine import RunOptions, RunRecord, run
from noisy_cbo.ensemble import validate_params
from noisy_cbo.logging_config import log
from noisy_cbo.models import (
    CboError,
    CboParams,
    ConfigurationError,
    ExperimentConfig,
    InitSpec,
    NoiseSpec,
    ObjectiveKind,
    ResultFormat,
    SubsampleSpec,
)
from noisy_cbo.objectives import build_objective
from noisy_cbo.oracle import CostLedger, Oracle, build_oracle, cost
from noisy_cbo.randomness import SeedSpec, run_seed

__all__ = [
    "CostLedger",
    "ExperimentRow",
    "RESULT_COLUMNS",
    "ResultsError",
    "StatsSummary",
    "cost",
    "emit_results",
    "load_experiment_data",
    "percentile_summary",
    "run_experiment",
    "run_single",
]

RESULT_COLUMNS = [
    "sigma0",
    "sigma1",
    "ell",
    "alpha",
    "mean",
    "min",
    "max",
    "p50",
    "p75",
    "p90",
    "mean_it",
    "mean_evals",
    "mean_cost",
    "runs_ok",
    "runs_failed",
    "metric",
    "row_kind",
]


class ResultsError(CboError):
    """Raised when campaign results cannot be summarized or written."""


@dataclass(frozen=True)
class StatsSummary:
    mean: float
    min: float
    max: float
    p50: float
    p75: float
    p90: float


def percentile_summary(values: Sequence[float]) -> StatsSummary:
    """Mean, extremes and nearest-rank percentiles (rank ceil(p n / 100), 1-based)."""
    sample = np.asarray(values, dtype=float)
    if sample.size == 0:
        raise ResultsError("cannot summarize an empty list")
    p50, p75, p90 = np.percentile(sample, [50, 75, 90], method="inverted_cdf")
    low, high = float(sample.min()), float(sample.max())
    return StatsSummary(
        mean=min(max(float(sample.mean()), low), high),
        min=low,
        max=high,
        p50=float(p50),
        p75=float(p75),
        p90=float(p90),
    )


@dataclass(frozen=True)
class ExperimentRow:
    sigma0: float | None
    sigma1: float | None
    ell: float | None
    alpha: float
    mean: float
    min: float
    max: float
    p50: float
    p75: float
    p90: float
    mean_it: float
    mean_evals: float
    mean_cost: float
    runs_ok: int
    runs_failed: int
    metric: str
    row_kind: str = "cell"

    def to_dict(self) -> dict[str, Any]:
        row = asdict(self)
        return {
            column: None if _is_nan(row[column]) else row[column] for column in RESULT_COLUMNS
        }


@dataclass(frozen=True)
class _RunTask:
    params: CboParams
    oracle: Oracle
    init: InitSpec
    seed: SeedSpec
    options: RunOptions
    x_star: np.ndarray | None
    test_set: Dataset | None


@dataclass(frozen=True)
class _RunOutcome:
    value: float | None
    iterations: int
    component_evals: int
    cost: float
    failure: str | None = None


def load_experiment_data(config: ExperimentConfig) -> tuple[Dataset, Dataset] | None:
    """Training and test sets of a finite-sum campaign (the same set when no split is asked)."""
    objective = config.objective
    if objective.kind != ObjectiveKind.FINITE_SUM:
        return None
    if objective.dataset is not None:
        dataset = load_dataset(objective.dataset, objective.label_column)
    else:
        synthetic = objective.synthetic
        dataset = synthetic_dataset(
            synthetic.n_samples,
            synthetic.dim,
            synthetic.flip_prob,
            SeedSpec(config.seed if synthetic.seed is None else synthetic.seed),
        )
    if dataset.dim != config.dim:
        raise ConfigurationError(f"dataset has d = {dataset.dim}, config has dim = {config.dim}")
    if objective.train_size is None:
        return dataset, dataset
    return split_dataset(dataset, objective.train_size, SeedSpec(config.seed))


def run_experiment(
    config: ExperimentConfig, data: tuple[Dataset, Dataset] | None = None
) -> list[ExperimentRow]:
    """Run ``config.runs`` seeded runs per sweep cell and summarize each cell.

    Run r of every cell uses the stream of run index r, so cells are compared on
    common random numbers.
    """
    data = data if data is not None else load_experiment_data(config)
    train, test = data if data is not None else (None, None)
    objective = build_objective(config.objective, train)
    x_star = config.reference_point() if data is None else None
    metric = "accuracy" if data is not None else "error"
    if data is None and x_star is None:
        raise ConfigurationError("x_star is required to measure errors for this objective")

    rows = []
    cells = product(config.noise_cells(), config.ell_cells(), config.alpha_cells())
    for noise, ell, alpha in cells:
        params = config.params(alpha)
        for warning in validate_params(params).warnings:
            log.warning("parameter warning", detail=warning)
        oracle = build_oracle(
            objective, noise, SubsampleSpec(ell=ell) if ell is not None else None
        )
        options = RunOptions(x_star=x_star)
        tasks = [
            _RunTask(params, oracle, config.init, run_seed(config.seed, r), options, x_star, test)
            for r in range(config.runs)
        ]
        log.info(
            "cell started",
            sigma0=noise.sigma0,
            sigma1=noise.sigma1,
            ell=ell,
            alpha=alpha,
            runs=config.runs,
        )
        outcomes = _execute_all(tasks, config.workers)
        rows.append(_summarize(outcomes, noise, ell, alpha, metric, data is not None))

    if config.report_best and len(config.alpha_cells()) > 1:
        rows.extend(_best_rows(rows))
    return rows


def run_single(
    config: ExperimentConfig, run_index: int = 0
) -> tuple[RunRecord, dict[str, float]]:
    """One seeded run of the base cell; returns the record and its final metrics."""
    data = load_experiment_data(config)
    train, test = data if data is not None else (None, None)
    objective = build_objective(config.objective, train)
    x_star = config.reference_point()
    oracle = build_oracle(objective, config.noise, config.subsample)
    options = RunOptions(
        diagnostics=config.diagnostics, x_star=x_star, track_errors=config.track_errors
    )
    record = run(config.params(), oracle, config.init, run_seed(config.seed, run_index), options)

    point = record.final_consensus.point
    metrics = {"objective": float(oracle.exact(point[None, :])[0])}
    if x_star is not None:
        metrics["error"] = float(np.linalg.norm(point - x_star))
    if test is not None:
        metrics["accuracy"] = accuracy(point, test)
    log.info(
        "run finished",
        iterations=record.iterations,
        termination=str(record.termination),
        **metrics,
    )
    return record, metrics


def emit_results(
    rows: Sequence[ExperimentRow], format: ResultFormat | str, path: str | Path
) -> Path:
    if not rows:
        raise ResultsError("no result rows to write")
    destination = Path(path)
    records = [row.to_dict() for row in rows]
    try:
        destination.parent.mkdir(parents=True, exist_ok=True)
        if ResultFormat(format) == ResultFormat.CSV:
            pd.DataFrame(records, columns=RESULT_COLUMNS).to_csv(destination, index=False)
        else:
            destination.write_text(json.dumps(records, indent=2), encoding="utf-8")
    except OSError as error:
        raise ResultsError(f"Cannot write results to {destination}: {error}") from error
    return destination


def _execute_all(tasks: list[_RunTask], workers: int) -> list[_RunOutcome]:
    if workers <= 1 or len(tasks) <= 1:
        return [_execute_run(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_execute_run, tasks))


def _execute_run(task: _RunTask) -> _RunOutcome:
    try:
        record = run(task.params, task.oracle, task.init, task.seed, task.options)
    except CboError as error:
        return _RunOutcome(None, 0, 0, 0.0, failure=str(error))

    point = record.final_consensus.point
    if task.test_set is not None:
        value = accuracy(point, task.test_set)
    else:
        value = float(np.linalg.norm(point - task.x_star))
    return _RunOutcome(
        value,
        record.iterations,
        record.ledger.component_evals,
        record.ledger.cost,
    )


def _summarize(
    outcomes: list[_RunOutcome],
    noise: NoiseSpec,
    ell: float | None,
    alpha: float,
    metric: str,
    finite_sum: bool,
) -> ExperimentRow:
    succeeded = [outcome for outcome in outcomes if outcome.failure is None]
    failed = len(outcomes) - len(succeeded)
    for outcome in outcomes:
        if outcome.failure is not None:
            log.warning("run failed", alpha=alpha, error=outcome.failure)

    if succeeded:
        stats = percentile_summary([outcome.value for outcome in succeeded])
        mean_it = float(np.mean([outcome.iterations for outcome in succeeded]))
        mean_evals = float(np.mean([outcome.component_evals for outcome in succeeded]))
        mean_cost = float(np.mean([outcome.cost for outcome in succeeded]))
    else:
        stats = StatsSummary(*([math.nan] * 6))
        mean_it = mean_evals = mean_cost = math.nan

    return ExperimentRow(
        sigma0=None if finite_sum else noise.sigma0,
        sigma1=None if finite_sum else noise.sigma1,
        ell=ell,
        alpha=alpha,
        mean=stats.mean,
        min=stats.min,
        max=stats.max,
        p50=stats.p50,
        p75=stats.p75,
        p90=stats.p90,
        mean_it=mean_it,
        mean_evals=mean_evals,
        mean_cost=mean_cost,
        runs_ok=len(succeeded),
        runs_failed=failed,
        metric=metric,
    )


def _best_rows(rows: list[ExperimentRow]) -> list[ExperimentRow]:
    """Per (sigma0, sigma1, ell) the alpha with the lowest mean error or highest mean accuracy."""
    groups: dict[tuple[Any, ...], list[ExperimentRow]] = {}
    for row in rows:
        groups.setdefault((row.sigma0, row.sigma1, row.ell), []).append(row)

    best = []
    for group in groups.values():
        candidates = [row for row in group if not math.isnan(row.mean)]
        if not candidates:
            continue
        if candidates[0].metric == "accuracy":
            chosen = max(candidates, key=lambda row: row.mean)
        else:
            chosen = min(candidates, key=lambda row: row.mean)
        best.append(_with_kind(chosen, "best"))
    return best


def _is_nan(value: Any) -> bool:
    return isinstance(value, float) and math.isnan(value)


def _with_kind(row: ExperimentRow, kind: str) -> ExperimentRow:
    values = asdict(row)
    values["row_kind"] = kind
    return ExperimentRow(**values)
