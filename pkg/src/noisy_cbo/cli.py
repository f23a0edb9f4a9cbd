import argparse
import json
from pathlib import Path

from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from noisy_cbo import diagnostics
from noisy_cbo.checks import CheckResult, property_suite, reproduction_suite
from noisy_cbo.datasets import (
    load_dataset,
    split_dataset,
    synthetic_dataset,
    write_dataset,
)
from noisy_cbo.harness import emit_results, run_experiment, run_single
from noisy_cbo.logging_config import log
from noisy_cbo.models import CboError, ConfigurationError, ExperimentConfig
from noisy_cbo.objectives import build_objective
from noisy_cbo.randomness import SeedSpec
from noisy_cbo.run_settings import load_config, resolve_output_path

load_dotenv()

QUICK_SCALE = 0.05


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbo")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run one seeded CBO optimization")
    run.add_argument("config", help="TOML or JSON configuration file")
    run.add_argument("-o", "--output", default=None, help="Path for the run record JSON")

    sweep = subparsers.add_parser("sweep", help="Run a multi-run campaign over sweep cells")
    sweep.add_argument("config", help="TOML or JSON configuration file")
    sweep.add_argument("-o", "--output", default=None, help="Path for the results table")

    check = subparsers.add_parser("check", help="Run the property and reproduction checks")
    check.add_argument(
        "--quick",
        action="store_true",
        help="Shrink steps, trials and runs for a smoke run",
    )
    check.add_argument(
        "--reproduce",
        action="store_true",
        help="Also run the multi-run Rastrigin and classification reproductions",
    )
    check.add_argument("--seed", type=int, default=0)

    bounds = subparsers.add_parser("bounds", help="Evaluate the closed-form theory quantities")
    bounds.add_argument("config", help="TOML or JSON configuration file")

    dataset = subparsers.add_parser("dataset", help="Generate or split classification data")
    dataset_commands = dataset.add_subparsers(dest="dataset_command", required=True)

    synth = dataset_commands.add_parser("synth", help="Write a synthetic half-space dataset")
    synth.add_argument("-o", "--output", required=True, help="CSV path to write")
    synth.add_argument("--n-samples", type=int, default=2000)
    synth.add_argument("--dim", type=int, default=7)
    synth.add_argument("--flip-prob", type=float, default=0.05)
    synth.add_argument("--seed", type=int, default=0)

    split = dataset_commands.add_parser("split", help="Split a dataset into train and test CSVs")
    split.add_argument("input_csv", help="Delimited file with one label column")
    split.add_argument("--train-size", type=int, required=True)
    split.add_argument("--label-column", default="-1", help="Label column name or index")
    split.add_argument("--out-dir", default=None, help="Directory for the split files")
    split.add_argument("--seed", type=int, default=0)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            config = load_config(args.config)
            record, metrics = run_single(config)
            output_path = resolve_output_path(args.output or config.output, "run.json")
            output_path.parent.mkdir(parents=True, exist_ok=True)
            output_path.write_text(
                json.dumps({**record.to_dict(), "metrics": metrics}, indent=2),
                encoding="utf-8",
            )
            log.info(f"Wrote {output_path}")
            if config.diagnostics:
                diagnostics_path = output_path.with_name(f"{output_path.stem}_diagnostics.csv")
                record.diagnostics_frame().to_csv(diagnostics_path, index=False)
                log.info(f"Wrote {diagnostics_path}")
            return 0
        if args.command == "sweep":
            config = load_config(args.config)
            rows = run_experiment(config)
            output_path = emit_results(
                rows,
                config.format,
                resolve_output_path(args.output or config.output, f"results.{config.format}"),
            )
            failed = sum(row.runs_failed for row in rows)
            log.info(f"Wrote {len(rows)} rows to {output_path}, {failed} failed runs")
            return 0
        if args.command == "check":
            scale = QUICK_SCALE if args.quick else 1.0
            results = property_suite(args.seed, scale)
            if args.reproduce:
                results += reproduction_suite(args.seed, scale)
            _print_checks(results)
            return 0 if all(result.passed for result in results) else 1
        if args.command == "bounds":
            _print_bounds(load_config(args.config))
            return 0
        if args.command == "dataset":
            if args.dataset_command == "synth":
                dataset = synthetic_dataset(
                    args.n_samples, args.dim, args.flip_prob, SeedSpec(args.seed)
                )
                output_path = write_dataset(dataset, args.output)
                log.info(f"Wrote {output_path} ({dataset.metadata['flipped']} flipped labels)")
                return 0
            source = Path(args.input_csv)
            label_column = args.label_column
            if _is_int(label_column):
                label_column = int(label_column)
            train, test = split_dataset(
                load_dataset(source, label_column), args.train_size, SeedSpec(args.seed)
            )
            out_dir = Path(args.out_dir) if args.out_dir else source.parent
            for part, name in ((train, "train"), (test, "test")):
                log.info(f"Wrote {write_dataset(part, out_dir / f'{source.stem}_{name}.csv')}")
            return 0
    except (CboError, FileNotFoundError) as error:
        log.error(str(error))
        return 1

    parser.print_help()
    return 1


def _print_checks(results: list[CheckResult]) -> None:
    table = Table(title="CBO checks")
    table.add_column("check")
    table.add_column("result")
    table.add_column("seconds", justify="right")
    table.add_column("detail")
    for result in results:
        status = "[green]pass[/green]" if result.passed else "[red]FAIL[/red]"
        table.add_row(result.name, status, f"{result.seconds:.1f}", result.detail)
    Console().print(table)


def _print_bounds(config: ExperimentConfig) -> None:
    spec = config.bounds
    params = config.params()
    seed = SeedSpec(config.seed)
    mv = diagnostics.mv_bound(spec.t0, spec.t1, spec.mf, params.n_particles, spec.mv_mode)
    d0 = diagnostics.estimate_d0(config.init, params, seed, spec.estimate_trials)

    v0 = spec.v0
    if v0 is None:
        x_star = config.reference_point()
        if x_star is None:
            raise ConfigurationError("bounds.v0 or x_star is needed for the complexity schedule")
        v0 = diagnostics.estimate_v0(config.init, params, x_star, seed, spec.estimate_trials)

    schedule = diagnostics.complexity_schedule(
        spec.eps, spec.tau, params.gamma, params.xi, v0, params.n_particles
    )
    constants = diagnostics.theory_constants(
        spec.mh,
        spec.mg,
        params.gamma,
        params.xi,
        params.alpha,
        mv,
        d0,
        spec.f_star,
        spec.e_exp_f0,
        spec.eps_margin,
        params.n_particles,
    )
    tolerance = diagnostics.noise_tolerance_bound(
        schedule.sigma_hat, spec.eps, params.alpha, schedule.theta, schedule.k_star, d0
    )

    f_r = None
    if spec.ball_radius is not None:
        x_star = config.reference_point()
        if x_star is None:
            raise ConfigurationError("bounds.ball_radius needs x_star")
        objective = build_objective(config.objective)
        f_r = diagnostics.ball_max(objective, x_star, spec.ball_radius)

    table = Table(title="Theory quantities")
    table.add_column("quantity")
    table.add_column("value", justify="right")
    for name, value in (
        ("theta", schedule.theta),
        ("M_v", mv),
        ("D_0", d0),
        ("V_0", v0),
        ("mu", schedule.mu),
        ("sigma_hat", schedule.sigma_hat),
        ("k*", schedule.k_star),
        ("Gamma_A", constants.gamma_a),
        ("Gamma_B", constants.gamma_b),
        ("initial condition rhs", constants.rhs),
        ("initial condition holds", constants.condition_holds),
        ("M_v tolerance", tolerance),
        ("M_v within tolerance", mv < tolerance),
        ("f_r", f_r),
    ):
        table.add_row(name, _format_value(value))
    Console().print(table)


def _format_value(value: object) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _is_int(text: str) -> bool:
    return text.lstrip("-").isdigit()


if __name__ == "__main__":
    raise SystemExit(main())
