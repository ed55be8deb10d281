"""
Datasets: the in-memory type, CSV ingestion and a planted synthetic task.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import numpy as np
import pandas as pd

from ._errors import DataError

logger = logging.getLogger(__name__)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Dense numeric binary-classification data.

    Attributes:
        features: float64 matrix, rows are examples.
        labels: int vector with values in {0, 1}.
        feature_names: One name per column.
        name: Identifier used in logs and result tables.
        row_ids: Identity of each row in the dataset it was cut from; lets
            holdout isolation be audited after partitioning.
        imputed: ``(column, n_cells)`` pairs filled with the column median
            at ingestion.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = ()
    name: str = "dataset"
    row_ids: np.ndarray | None = None
    imputed: tuple[tuple[str, int], ...] = field(default=())

    def __post_init__(self) -> None:
        X = np.array(self.features, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise DataError(f"{self.name}: features must be a matrix, got {X.ndim} dims")
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DataError(
                f"{self.name}: {X.shape[0]} feature rows but {y.shape} labels"
            )
        if y.size and not np.isin(y, (0, 1)).all():
            raise DataError(f"{self.name}: labels must be 0/1")
        if np.isnan(X).any():
            raise DataError(f"{self.name}: features contain NaN; impute before building a Dataset")
        names = tuple(self.feature_names) or tuple(f"f{i}" for i in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError(f"{self.name}: {len(names)} feature names for {X.shape[1]} columns")
        ids = np.arange(X.shape[0]) if self.row_ids is None else np.array(self.row_ids, dtype=np.int64)
        if ids.shape != (X.shape[0],):
            raise DataError(f"{self.name}: row_ids length does not match rows")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y.astype(np.int64)))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "row_ids", _frozen(ids))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> tuple[int, int]:
        n1 = int(self.labels.sum())
        return self.n_rows - n1, n1

    def take(self, indices: Sequence[int] | np.ndarray, name: str | None = None) -> "Dataset":
        """Rows at the given positions, keeping their row ids."""
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(
            self.features[idx],
            self.labels[idx],
            self.feature_names,
            name or self.name,
            self.row_ids[idx],
            self.imputed,
        )

    @staticmethod
    def concat(parts: Sequence["Dataset"], name: str) -> "Dataset":
        if not parts:
            raise DataError("cannot concatenate zero datasets")
        return Dataset(
            np.vstack([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
            parts[0].feature_names,
            name,
            np.concatenate([p.row_ids for p in parts]),
        )

    def checksum(self) -> str:
        """SHA-256 over feature bytes, labels and row ids."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        h.update(np.ascontiguousarray(self.row_ids).tobytes())
        return h.hexdigest()


def file_checksum(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def ingest_csv(
    path: str | Path,
    label_column: str,
    positive_label: Any = None,
    name: str | None = None,
) -> Dataset:
    """
    Load a headed CSV as a binary classification Dataset.

    Every column other than the label must be numeric; empty cells are
    imputed with the column median and recorded in ``Dataset.imputed``. The
    label column must hold exactly two distinct values; ``positive_label``
    (compared as text) maps to 1. Without it the lexicographically larger
    value is taken as positive.

    Args:
        path: CSV file with a header row.
        label_column: Name of the label column.
        positive_label: Label value mapped to class 1.
        name: Dataset name (defaults to the file stem).

    Returns:
        The ingested Dataset.

    Raises:
        DataError: Missing or empty file, missing label column, non-binary
            labels, a non-numeric column, or an all-empty column.
    """
    path = Path(path)
    name = name or path.stem
    if not path.exists():
        raise DataError(f"{path}: file not found")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise DataError(f"{path}: file is empty") from e
    if frame.shape[0] == 0:
        raise DataError(f"{path}: no data rows")
    if label_column not in frame.columns:
        raise DataError(
            f"{path}: label column {label_column!r} not in header {list(frame.columns)}"
        )

    raw_labels = frame[label_column].str.strip()
    missing = np.flatnonzero(raw_labels.eq("").to_numpy())
    if missing.size:
        raise DataError(f"{path}: row {missing[0] + 2}: empty label")
    distinct = sorted(raw_labels.unique())
    if len(distinct) != 2:
        raise DataError(
            f"{path}: label column {label_column!r} has {len(distinct)} distinct values "
            f"{distinct[:5]}; expected exactly 2"
        )
    positive = distinct[1] if positive_label is None else str(positive_label).strip()
    if positive not in distinct:
        raise DataError(f"{path}: positive label {positive!r} not among {distinct}")
    labels = raw_labels.eq(positive).to_numpy().astype(np.int64)

    feature_cols = [c for c in frame.columns if c != label_column]
    columns = []
    imputed = []
    for col in feature_cols:
        cells = frame[col].str.strip()
        empty = cells.eq("") | cells.str.lower().isin(("?", "na", "nan"))
        values = pd.to_numeric(cells.mask(empty), errors="coerce")
        bad = values.isna() & ~empty
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataError(
                f"{path}: row {row + 2}, column {col!r}: cannot parse {cells.iloc[row]!r} as a number"
            )
        n_missing = int(empty.sum())
        if n_missing:
            if n_missing == len(values):
                raise DataError(f"{path}: column {col!r} has no values")
            values = values.fillna(values.median())
            imputed.append((col, n_missing))
        columns.append(values.to_numpy(dtype=np.float64))

    X = np.column_stack(columns) if columns else np.empty((len(labels), 0))
    data = Dataset(X, labels, tuple(feature_cols), name, imputed=tuple(imputed))
    n0, n1 = data.class_counts()
    logger.info(
        "ingested %s: %d rows, %d columns, classes (%d, %d), %d imputed cells",
        name, data.n_rows, data.n_features, n0, n1, sum(n for _, n in imputed),
    )
    return data


def write_csv(data: Dataset, path: str | Path, label_column: str = "label") -> None:
    """
    Write a Dataset as CSV with a leading ``row_id`` column.

    Floats are written with ``repr`` so that reading the file back with
    ``read_shard_csv`` reproduces the values exactly.
    """
    frame = pd.DataFrame(data.features, columns=list(data.feature_names))
    frame.insert(0, "row_id", data.row_ids)
    frame[label_column] = data.labels
    frame.to_csv(path, index=False, lineterminator="\n", float_format=None)


def read_shard_csv(path: str | Path, label_column: str = "label", name: str | None = None) -> Dataset:
    """Read a file produced by ``write_csv``."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DataError(f"{path}: unreadable shard: {e}") from e
    if "row_id" not in frame.columns or label_column not in frame.columns:
        raise DataError(f"{path}: shard needs 'row_id' and {label_column!r} columns")
    feature_cols = [c for c in frame.columns if c not in ("row_id", label_column)]
    return Dataset(
        frame[feature_cols].to_numpy(dtype=np.float64),
        frame[label_column].to_numpy(dtype=np.int64),
        tuple(feature_cols),
        name or path.stem,
        frame["row_id"].to_numpy(dtype=np.int64),
    )


def make_synthetic(
    n_rows: int = 1000,
    n_features: int = 5,
    noise: float = 0.1,
    informative: int = 2,
    seed: int = 0,
    name: str = "synthetic",
) -> Dataset:
    """
    Planted linear task with controlled label noise.

    Features are uniform on ``[-1, 1]``; the clean label is the sign of a
    fixed weighted sum of the first ``informative`` features and each label
    is then flipped with probability ``noise``, so the best achievable
    balanced accuracy is about ``1 - noise``.

    Raises:
        DataError: If the settings are out of range.
    """
    if n_rows < 2 or n_features < 1 or not 1 <= informative <= n_features:
        raise DataError("synthetic task needs n_rows >= 2 and 1 <= informative <= n_features")
    if not 0.0 <= noise < 0.5:
        raise DataError(f"synthetic noise must be in [0, 0.5), got {noise}")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n_rows, n_features))
    w = np.linspace(1.0, 0.5, informative)
    clean = (X[:, :informative] @ w > 0).astype(np.int64)
    flip = rng.random(n_rows) < noise
    y = np.where(flip, 1 - clean, clean)
    return Dataset(X, y, tuple(f"x{i}" for i in range(n_features)), name)


class DatasetInfo(NamedTuple):
    rows: int
    columns: int
    class_sizes: tuple[int, int]
    default_balanced_accuracy: float
    room_for_improvement: float


# OpenML binary tasks used for the reference experiments; accuracies are the
# 10-fold CV balanced accuracy of the expert default and the headroom found
# by centralized HPO.
REFERENCE_DATASETS: dict[str, DatasetInfo] = {
    "eeg-eye-state": DatasetInfo(14980, 14, (8257, 6723), 0.9028, 0.0438),
    "electricity": DatasetInfo(45312, 8, (26075, 19237), 0.8778, 0.0514),
    "heart-statlog": DatasetInfo(270, 13, (150, 120), 0.7942, 0.0617),
    "oil-spill": DatasetInfo(937, 49, (896, 41), 0.6322, 0.1136),
    "pollen": DatasetInfo(3848, 5, (1924, 1924), 0.4886, 0.0335),
    "sonar": DatasetInfo(208, 61, (111, 97), 0.8743, 0.0382),
    "pc3": DatasetInfo(1563, 37, (1403, 160), 0.5899, 0.0482),
}
