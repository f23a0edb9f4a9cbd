import json
import os
import tomllib
from pathlib import Path

from pydantic import ValidationError

from noisy_cbo.models import ConfigurationError, ExperimentConfig

OUTPUT_DIR_ENV = "CBO_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = Path("output")


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse a TOML or JSON configuration; dataset paths resolve against the file's directory."""
    source = Path(path)
    if not source.exists():
        raise FileNotFoundError(f"File not found: {source}")

    text = source.read_text(encoding="utf-8")
    try:
        if source.suffix == ".toml":
            data = tomllib.loads(text)
        elif source.suffix == ".json":
            data = json.loads(text)
        else:
            raise ConfigurationError(f"Unsupported configuration format: {source.suffix}")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as error:
        raise ConfigurationError(f"Cannot parse {source}: {error}") from error

    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as error:
        raise ConfigurationError(f"Invalid configuration {source}: {error}") from error

    dataset = config.objective.dataset
    if dataset is not None and not dataset.is_absolute():
        objective = config.objective.model_copy(update={"dataset": source.parent / dataset})
        config = config.model_copy(update={"objective": objective})
    return config


def resolve_output_path(path: str | Path | None, default_name: str) -> Path:
    """Output location; ``CBO_OUTPUT_DIR`` replaces the directory part when set."""
    target = Path(path) if path else DEFAULT_OUTPUT_DIR / default_name
    override = os.environ.get(OUTPUT_DIR_ENV)
    if override:
        return Path(override) / target.name
    return target
