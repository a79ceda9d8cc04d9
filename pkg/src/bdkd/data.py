"""Synthetic classification tasks and CSV ingestion at desk scale.

Generators are fully deterministic under their seed. Feature
standardization is a separate step so that its statistics can be
computed on the training split only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

STD_FLOOR = 1e-8


@dataclass
class Dataset:
    """Immutable feature/label table with a split tag."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError(
                f"features {self.features.shape} and labels {self.labels.shape} do not align"
            )
        if len(self.labels) == 0:
            raise ValueError("dataset is empty")
        if np.any(np.isnan(self.features)):
            raise ValueError("features contain NaN")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]


def gen_gaussian_blobs(
    num_classes: int,
    n_per_class: int,
    dim: int = 2,
    spread: float = 1.0,
    seed: int = 0,
) -> Dataset:
    """Isotropic Gaussian clusters around class means on a circle.

    ``spread`` is the noise standard deviation; 0 gives perfectly
    separable point classes.
    """
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    rng = np.random.default_rng(seed)
    radius = 3.0
    means = np.zeros((num_classes, dim))
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    if dim >= 2:
        means[:, 0] = radius * np.cos(angles)
        means[:, 1] = radius * np.sin(angles)
    else:
        means[:, 0] = radius * np.arange(num_classes)
    features = np.vstack([
        means[k] + spread * rng.standard_normal((n_per_class, dim))
        for k in range(num_classes)
    ])
    labels = np.repeat(np.arange(num_classes), n_per_class)
    return Dataset(features=features, labels=labels, num_classes=num_classes)


# Radians each spiral arm winds from center to rim; together with the
# noise level this sets how nonlinear the task is.
SPIRAL_TURNS = 5.0


def gen_spirals(
    num_classes: int,
    n_per_class: int,
    noise: float = 0.2,
    seed: int = 0,
) -> Dataset:
    """Interleaved 2-d spiral arms, one per class."""
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    rng = np.random.default_rng(seed)
    features = np.zeros((num_classes * n_per_class, 2))
    labels = np.repeat(np.arange(num_classes), n_per_class)
    for k in range(num_classes):
        idx = slice(k * n_per_class, (k + 1) * n_per_class)
        radius = np.linspace(0.05, 1.0, n_per_class)
        angle = 2.0 * np.pi * k / num_classes + radius * SPIRAL_TURNS
        angle = angle + noise * rng.standard_normal(n_per_class)
        features[idx, 0] = radius * np.cos(angle)
        features[idx, 1] = radius * np.sin(angle)
    return Dataset(features=features, labels=labels, num_classes=num_classes)


def split(dataset: Dataset, val_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified seeded partition into (train, val)."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    train_idx: list[np.ndarray] = []
    val_idx: list[np.ndarray] = []
    for k in range(dataset.num_classes):
        members = np.flatnonzero(dataset.labels == k)
        if len(members) < 2:
            raise ValueError(f"class {k} has fewer than 2 samples; cannot stratify")
        perm = rng.permutation(members)
        n_val = max(1, int(round(len(members) * val_fraction)))
        if n_val >= len(members):
            n_val = len(members) - 1
        val_idx.append(perm[:n_val])
        train_idx.append(perm[n_val:])
    train_sel = np.sort(np.concatenate(train_idx))
    val_sel = np.sort(np.concatenate(val_idx))

    def take(sel: np.ndarray, tag: str) -> Dataset:
        return Dataset(
            features=dataset.features[sel].copy(),
            labels=dataset.labels[sel].copy(),
            num_classes=dataset.num_classes,
            split=tag,
        )

    return take(train_sel, "train"), take(val_sel, "val")


def standardize(train: Dataset, *others: Dataset) -> tuple[Dataset, ...]:
    """Z-score all datasets using the training split's statistics.

    Standard deviations are floored at ``STD_FLOOR`` so constant columns
    map to (numerically) zero instead of dividing by zero.
    """
    mean = train.features.mean(axis=0)
    std = np.maximum(train.features.std(axis=0), STD_FLOOR)
    out = []
    for ds in (train, *others):
        out.append(replace(ds, features=(ds.features - mean) / std))
    return tuple(out)


def load_csv(path, label_column: str) -> Dataset:
    """Read a header + comma-separated numeric table into a raw Dataset.

    Labels must be integers; every other column is a float feature.
    Malformed rows are reported with their 1-based line number.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if label_column not in header:
            raise ValueError(f"{path}: unknown label column {label_column!r}, header is {header}")
        label_pos = header.index(label_column)
        features: list[list[float]] = []
        labels: list[int] = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                labels.append(int(row[label_pos]))
                features.append([float(v) for i, v in enumerate(row) if i != label_pos])
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from None
    if not labels:
        raise ValueError(f"{path}: no data rows")
    labels_arr = np.asarray(labels, dtype=np.int64)
    if labels_arr.min() < 0:
        raise ValueError(f"{path}: labels must be nonnegative integers")
    return Dataset(
        features=np.asarray(features, dtype=np.float64),
        labels=labels_arr,
        num_classes=int(labels_arr.max()) + 1,
    )


def save_csv(dataset: Dataset, path, label_column: str = "label") -> None:
    """Write the dataset with a header row; inverse of load_csv."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(dataset.num_features)] + [label_column])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
