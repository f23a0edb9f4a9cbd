from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from noisy_cbo.models import CboError
from noisy_cbo.randomness import SPLIT, SYNTHETIC, SeedSpec

LABEL_COLUMN = "label"


class DatasetError(CboError):
    """Raised when a dataset cannot be loaded, generated or split."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Binary classification samples (a_j, b_j), a_j in R^d, b_j in {0, 1}."""

    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=float)
        labels = np.array(self.labels, dtype=float)
        if features.ndim != 2 or features.shape[0] == 0 or features.shape[1] == 0:
            raise DatasetError(f"features must be a nonempty M x d array, got {features.shape}")
        if labels.shape != (features.shape[0],):
            raise DatasetError(
                f"expected {features.shape[0]} labels, got shape {labels.shape}"
            )
        if not np.isin(labels, (0.0, 1.0)).all():
            raise DatasetError("labels must be 0 or 1")
        if not np.isfinite(features).all():
            raise DatasetError("features must be finite")
        features.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: Sequence[int] | np.ndarray, name: str) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        return Dataset(self.features[indices], self.labels[indices], name, dict(self.metadata))


def load_dataset(path: str | Path, label_column: str | int = -1) -> Dataset:
    """Read a delimited text file; categorical labels map to {0, 1} in lexicographic order."""
    source = Path(path)
    if not source.exists():
        raise FileNotFoundError(f"File not found: {source}")

    # other delimited formats (tab, semicolon) are sniffed
    sep = "," if source.suffix.lower() == ".csv" else None
    try:
        frame = pd.read_csv(source, sep=sep, engine="python")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as error:
        raise DatasetError(f"Cannot parse {source}: {error}") from error
    if frame.empty:
        raise DatasetError(f"No rows in {source}")

    label_name = _resolve_label_column(frame, label_column)
    raw_labels = frame[label_name]
    feature_frame = frame.drop(columns=[label_name])
    if feature_frame.shape[1] == 0:
        raise DatasetError(f"No feature columns in {source}")

    numeric = feature_frame.apply(pd.to_numeric, errors="coerce")
    bad_columns = [
        str(column) for column in numeric.columns if numeric[column].isna().any()
    ]
    if bad_columns:
        raise DatasetError(
            f"Non-numeric or missing feature values in columns: {', '.join(bad_columns)}"
        )

    labels, mapping = _binary_labels(raw_labels)
    return Dataset(
        numeric.to_numpy(dtype=float),
        labels,
        name=source.stem,
        metadata={
            "source": str(source),
            "label_column": str(label_name),
            "label_mapping": mapping,
            "feature_columns": [str(column) for column in feature_frame.columns],
        },
    )


def split_dataset(
    dataset: Dataset, train_size: int, seed: SeedSpec
) -> tuple[Dataset, Dataset]:
    if not 1 <= train_size < dataset.size:
        raise DatasetError(
            f"train_size must lie in [1, {dataset.size - 1}], got {train_size}"
        )
    order = seed.child(SPLIT).generator().permutation(dataset.size)
    train = dataset.subset(np.sort(order[:train_size]), f"{dataset.name}_train")
    test = dataset.subset(np.sort(order[train_size:]), f"{dataset.name}_test")
    return train, test


def synthetic_dataset(
    n_samples: int, dim: int, flip_prob: float, seed: SeedSpec
) -> Dataset:
    """Uniform features on [-1, 1]^d labelled by a hidden half-space, with label noise."""
    if n_samples < 1 or dim < 1:
        raise DatasetError("n_samples and dim must be at least 1")
    if not 0 <= flip_prob <= 1:
        raise DatasetError(f"flip_prob must lie in [0, 1], got {flip_prob}")
    rng = seed.child(SYNTHETIC).generator()
    weights = rng.standard_normal(dim)
    weights /= np.linalg.norm(weights)
    features = rng.uniform(-1.0, 1.0, size=(n_samples, dim))
    labels = (features @ weights >= 0).astype(float)
    flips = rng.random(n_samples) < flip_prob
    labels[flips] = 1.0 - labels[flips]
    return Dataset(
        features,
        labels,
        name="synthetic",
        metadata={
            "hidden_weights": weights.tolist(),
            "flip_prob": flip_prob,
            "flipped": int(flips.sum()),
        },
    )


def accuracy(x: Sequence[float] | np.ndarray, dataset: Dataset) -> float:
    """Fraction classified correctly by sigmoid(x^T a_j) >= 1/2, i.e. x^T a_j >= 0."""
    x = np.asarray(x, dtype=float)
    if x.shape != (dataset.dim,):
        raise DatasetError(f"x has shape {x.shape}, dataset has d = {dataset.dim}")
    predictions = (dataset.features @ x >= 0).astype(float)
    return float(np.mean(predictions == dataset.labels))


def write_dataset(dataset: Dataset, path: str | Path) -> Path:
    destination = Path(path)
    destination.parent.mkdir(parents=True, exist_ok=True)
    columns = dataset.metadata.get("feature_columns") or [
        f"f{index}" for index in range(dataset.dim)
    ]
    frame = pd.DataFrame(dataset.features, columns=columns)
    frame[LABEL_COLUMN] = dataset.labels.astype(int)
    frame.to_csv(destination, index=False)
    return destination


def _resolve_label_column(frame: pd.DataFrame, label_column: str | int) -> Any:
    if isinstance(label_column, int):
        try:
            return frame.columns[label_column]
        except IndexError as error:
            raise DatasetError(f"Label column index {label_column} out of range") from error
    if label_column not in frame.columns:
        raise DatasetError(f"Missing label column: {label_column}")
    return label_column


def _binary_labels(raw: pd.Series) -> tuple[np.ndarray, dict[str, int]]:
    numeric = pd.to_numeric(raw, errors="coerce")
    if not numeric.isna().any() and set(numeric.unique()) <= {0, 1}:
        return numeric.to_numpy(dtype=float), {"0": 0, "1": 1}

    classes = sorted(raw.astype(str).unique())
    if len(classes) != 2:
        raise DatasetError(
            f"Expected binary labels, found {len(classes)} classes: {', '.join(classes[:5])}"
        )
    mapping = {label: index for index, label in enumerate(classes)}
    return raw.astype(str).map(mapping).to_numpy(dtype=float), mapping
