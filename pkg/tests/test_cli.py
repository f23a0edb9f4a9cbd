import json
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import pandas as pd

from noisy_cbo.cli import main
from noisy_cbo.run_settings import OUTPUT_DIR_ENV
from test_datasets import RICE_LIKE_CSV

RASTRIGIN_TOML = """\
gamma = 0.1
xi = 0.0056
alpha = 10.0
n_particles = 10
dim = 1
max_iter = 20
runs = 2
seed = 1
alpha_sweep = [10.0, 1.0]
"""


def write_config(workspace: Path, text: str = RASTRIGIN_TOML, name: str = "cbo.toml") -> Path:
    path = workspace / name
    path.write_text(text, encoding="utf-8")
    return path


class CliTests(unittest.TestCase):
    def setUp(self) -> None:
        patcher = mock.patch.dict(os.environ)
        patcher.start()
        self.addCleanup(patcher.stop)
        os.environ.pop(OUTPUT_DIR_ENV, None)

    def test_run_command_writes_record_and_diagnostics(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            workspace = Path(tmp)
            config_path = write_config(workspace, RASTRIGIN_TOML + "diagnostics = true\n")
            output_path = workspace / "out" / "run.json"

            exit_code = main(["run", str(config_path), "--output", str(output_path)])

            self.assertEqual(0, exit_code)
            record = json.loads(output_path.read_text())
            self.assertEqual(20, record["iterations"])
            self.assertEqual("max_iter", record["termination"])
            self.assertEqual({"objective", "error"}, set(record["metrics"]))
            frame = pd.read_csv(workspace / "out" / "run_diagnostics.csv")
            self.assertEqual(21, len(frame))

    def test_run_command_honours_output_directory_override(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            workspace = Path(tmp)
            config_path = write_config(workspace)
            os.environ[OUTPUT_DIR_ENV] = str(workspace / "override")

            exit_code = main(["run", str(config_path), "--output", "elsewhere/run.json"])

            self.assertEqual(0, exit_code)
            self.assertTrue((workspace / "override" / "run.json").exists())

    def test_run_command_returns_failure_for_missing_config(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            exit_code = main(["run", str(Path(tmp) / "missing.toml")])

            self.assertEqual(1, exit_code)

    def test_run_command_returns_failure_for_invalid_parameters(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            workspace = Path(tmp)
            config_path = write_config(workspace, "gamma = 1.5\nmax_iter = 5\n")

            exit_code = main(["run", str(config_path), "-o", str(workspace / "run.json")])

            self.assertEqual(1, exit_code)
            self.assertFalse((workspace / "run.json").exists())

    def test_sweep_command_writes_results_table(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            workspace = Path(tmp)
            config_path = write_config(workspace)
            output_path = workspace / "results.csv"

            exit_code = main(["sweep", str(config_path), "-o", str(output_path)])

            self.assertEqual(0, exit_code)
            frame = pd.read_csv(output_path)
            self.assertEqual(["cell", "cell", "best"], frame["row_kind"].tolist())
            self.assertEqual([2, 2, 2], frame["runs_ok"].tolist())

    def test_sweep_command_writes_json_when_configured(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            workspace = Path(tmp)
            config_path = write_config(
                workspace, '{"max_iter": 5, "n_particles": 4, "format": "json"}', "cbo.json"
            )
            os.environ[OUTPUT_DIR_ENV] = str(workspace)

            exit_code = main(["sweep", str(config_path)])

            self.assertEqual(0, exit_code)
            records = json.loads((workspace / "results.json").read_text())
            self.assertEqual(1, len(records))

    def test_bounds_command_evaluates_closed_forms(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            config_path = write_config(
                Path(tmp), RASTRIGIN_TOML + "\n[bounds]\nt0 = 0.01\nball_radius = 0.05\n"
            )

            exit_code = main(["bounds", str(config_path)])

            self.assertEqual(0, exit_code)

    def test_bounds_ball_maximum_is_limited_to_two_dimensions(self) -> None:
        config_text = RASTRIGIN_TOML.replace("dim = 1", "dim = 3")
        with tempfile.TemporaryDirectory() as tmp:
            config_path = write_config(
                Path(tmp), config_text + "\n[bounds]\nt0 = 0.01\nball_radius = 0.05\n"
            )

            exit_code = main(["bounds", str(config_path)])

            self.assertEqual(1, exit_code)

    def test_bounds_command_needs_a_reference_point_for_finite_sums(self) -> None:
        config_text = """\
dim = 3

[objective]
kind = "finite_sum"

[objective.synthetic]
n_samples = 20
dim = 3
"""
        with tempfile.TemporaryDirectory() as tmp:
            config_path = write_config(Path(tmp), config_text)

            exit_code = main(["bounds", str(config_path)])

            self.assertEqual(1, exit_code)

    def test_dataset_synth_then_split(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            workspace = Path(tmp)
            data_path = workspace / "synthetic.csv"

            synth_code = main(
                ["dataset", "synth", "-o", str(data_path), "--n-samples", "40", "--dim", "3"]
            )
            split_code = main(
                [
                    "dataset",
                    "split",
                    str(data_path),
                    "--train-size",
                    "30",
                    "--label-column",
                    "label",
                    "--out-dir",
                    str(workspace / "split"),
                ]
            )

            self.assertEqual((0, 0), (synth_code, split_code))
            self.assertEqual(40, len(pd.read_csv(data_path)))
            self.assertEqual(30, len(pd.read_csv(workspace / "split" / "synthetic_train.csv")))
            self.assertEqual(10, len(pd.read_csv(workspace / "split" / "synthetic_test.csv")))

    def test_dataset_split_accepts_a_label_index(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            workspace = Path(tmp)
            source = workspace / "rice.csv"
            source.write_text(RICE_LIKE_CSV, encoding="utf-8")

            exit_code = main(["dataset", "split", str(source), "--train-size", "3"])

            self.assertEqual(0, exit_code)
            self.assertTrue((workspace / "rice_train.csv").exists())
            self.assertTrue((workspace / "rice_test.csv").exists())

    def test_dataset_split_rejects_an_oversized_training_set(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            source = Path(tmp) / "rice.csv"
            source.write_text(RICE_LIKE_CSV, encoding="utf-8")

            exit_code = main(["dataset", "split", str(source), "--train-size", "5"])

            self.assertEqual(1, exit_code)


if __name__ == "__main__":
    unittest.main()
