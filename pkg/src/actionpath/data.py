"""Tabular dataset ingestion, preprocessing, splitting, and synthetic data generation.

Cells are stored in a single float64 matrix: continuous columns hold raw
values, discrete columns hold category indices, and missing cells are NaN.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ColumnSpec",
    "Dataset",
    "Standardizer",
    "SyntheticSpec",
    "DataError",
    "load_csv",
    "write_csv",
    "split",
    "fit_standardizer",
    "impute_median",
    "drop_outliers_3sigma",
    "gen_synthetic",
    "diabetes_dataset",
    "schema_to_json",
    "schema_from_json",
]

MISSING_SENTINEL = "NA"


class DataError(ValueError):
    """Raised for malformed inputs or violated dataset preconditions."""


@dataclass(frozen=True)
class ColumnSpec:
    """One column of a tabular schema."""

    name: str
    kind: str  # "continuous" | "discrete"
    role: str = "feature"  # "feature" | "response" | "identifier"
    levels: tuple[str, ...] | None = None  # discrete columns only, ordered

    def __post_init__(self):
        if self.kind not in ("continuous", "discrete"):
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ("feature", "response", "identifier"):
            raise DataError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.kind == "discrete":
            if not self.levels:
                raise DataError(f"discrete column {self.name!r} needs a non-empty level list")
            if len(set(self.levels)) != len(self.levels):
                raise DataError(f"discrete column {self.name!r} has duplicate levels")
        elif self.levels is not None:
            raise DataError(f"continuous column {self.name!r} must not declare levels")


def _check_schema(schema):
    responses = [c for c in schema if c.role == "response"]
    if len(responses) != 1:
        raise DataError(f"schema must declare exactly one response column, found {len(responses)}")
    if responses[0].kind != "continuous":
        raise DataError("response column must be continuous")
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise DataError("schema has duplicate column names")


@dataclass
class Dataset:
    """Schema-tagged table. ``values`` is (n, n_columns) float64 with NaN for missing."""

    schema: list[ColumnSpec]
    values: np.ndarray
    provenance: str = ""
    row_ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        _check_schema(self.schema)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.schema):
            raise DataError(
                f"values shape {self.values.shape} does not match {len(self.schema)} columns"
            )
        if self.values.shape[0] < 1:
            raise DataError("dataset needs at least one row")
        if self.row_ids is None:
            self.row_ids = np.arange(self.values.shape[0])
        else:
            self.row_ids = np.asarray(self.row_ids, dtype=np.int64)
            if self.row_ids.shape != (self.values.shape[0],):
                raise DataError("row_ids length does not match row count")
        for j, col in enumerate(self.schema):
            if col.kind != "discrete":
                continue
            cells = self.values[:, j]
            ok = np.isnan(cells) | ((cells >= 0) & (cells < len(col.levels)) & (cells == np.floor(cells)))
            if not ok.all():
                bad = int(np.argmin(ok))
                raise DataError(f"row {bad}, column {col.name!r}: invalid category index")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.schema]

    def column_index(self, name: str) -> int:
        for j, c in enumerate(self.schema):
            if c.name == name:
                return j
        raise DataError(f"unknown column {name!r}")

    @property
    def feature_columns(self) -> list[ColumnSpec]:
        return [c for c in self.schema if c.role == "feature"]

    @property
    def response_index(self) -> int:
        return next(j for j, c in enumerate(self.schema) if c.role == "response")

    @property
    def response(self) -> np.ndarray:
        return self.values[:, self.response_index]

    def continuous_feature_indices(self) -> list[int]:
        return [j for j, c in enumerate(self.schema) if c.role == "feature" and c.kind == "continuous"]

    def discrete_feature_indices(self) -> list[int]:
        return [j for j, c in enumerate(self.schema) if c.role == "feature" and c.kind == "discrete"]

    def take(self, indices, provenance=None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            schema=self.schema,
            values=self.values[indices].copy(),
            provenance=provenance if provenance is not None else self.provenance,
            row_ids=self.row_ids[indices].copy(),
        )


def load_csv(path, schema, missing_sentinel=MISSING_SENTINEL) -> Dataset:
    """Parse a header-prefixed CSV against ``schema``.

    Empty strings and ``missing_sentinel`` cells parse as missing. Errors name
    the offending row (1-based, excluding header) and column.
    """
    _check_schema(schema)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        expected = [c.name for c in schema]
        if header != expected:
            for got, want in zip(header, expected):
                if got != want:
                    raise DataError(f"{path}: header column {got!r} does not match schema column {want!r}")
            raise DataError(f"{path}: header has {len(header)} columns, schema has {len(expected)}")
        level_maps = [
            {lvl: float(i) for i, lvl in enumerate(c.levels)} if c.kind == "discrete" else None
            for c in schema
        ]
        rows = []
        for rno, row in enumerate(reader, start=1):
            if len(row) != len(schema):
                raise DataError(f"{path}: row {rno} has {len(row)} cells, expected {len(schema)}")
            parsed = np.empty(len(schema))
            for j, (cell, col) in enumerate(zip(row, schema)):
                cell = cell.strip()
                if cell == "" or cell == missing_sentinel:
                    parsed[j] = np.nan
                elif level_maps[j] is not None:
                    try:
                        parsed[j] = level_maps[j][cell]
                    except KeyError:
                        raise DataError(
                            f"{path}: row {rno}, column {col.name!r}: unknown level {cell!r}"
                        ) from None
                else:
                    try:
                        parsed[j] = float(cell)
                    except ValueError:
                        raise DataError(
                            f"{path}: row {rno}, column {col.name!r}: unparseable number {cell!r}"
                        ) from None
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(schema=list(schema), values=np.vstack(rows), provenance=str(path))


def write_csv(dataset: Dataset, path, missing_sentinel=MISSING_SENTINEL) -> None:
    """Inverse of :func:`load_csv`; discrete cells are written as level labels."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset.column_names)
        for row in dataset.values:
            out = []
            for cell, col in zip(row, dataset.schema):
                if math.isnan(cell):
                    out.append(missing_sentinel)
                elif col.kind == "discrete":
                    out.append(col.levels[int(cell)])
                else:
                    out.append(repr(float(cell)))
            writer.writerow(out)


def split(dataset: Dataset, train_fraction: float, seed: int):
    """Disjoint, exhaustive train/test partition, deterministic per seed."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = dataset.n
    n_train = int(round(n * train_fraction))
    if n_train == n:
        raise DataError(f"split of {n} rows at fraction {train_fraction} leaves an empty test set")
    if n_train == 0:
        raise DataError(f"split of {n} rows at fraction {train_fraction} leaves an empty train set")
    perm = np.random.default_rng(seed).permutation(n)
    return (
        dataset.take(np.sort(perm[:n_train]), provenance=f"{dataset.provenance}[train]"),
        dataset.take(np.sort(perm[n_train:]), provenance=f"{dataset.provenance}[test]"),
    )


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine transform for continuous features.

    Uses the population standard deviation (divide by n); the convention is
    recorded so serialized model artifacts can invert transforms exactly.
    """

    columns: tuple[str, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]
    std_convention: str = "population"

    def __post_init__(self):
        if any(s <= 0 for s in self.stds):
            raise DataError("standardizer stds must all be positive")

    def apply(self, dataset: Dataset) -> Dataset:
        out = dataset.values.copy()
        for name, mu, sd in zip(self.columns, self.means, self.stds):
            j = dataset.column_index(name)
            out[:, j] = (out[:, j] - mu) / sd
        return replace(dataset, values=out, row_ids=dataset.row_ids.copy())

    def invert(self, dataset: Dataset) -> Dataset:
        out = dataset.values.copy()
        for name, mu, sd in zip(self.columns, self.means, self.stds):
            j = dataset.column_index(name)
            out[:, j] = out[:, j] * sd + mu
        return replace(dataset, values=out, row_ids=dataset.row_ids.copy())

    def apply_columns(self, names, values: np.ndarray) -> np.ndarray:
        """Standardize an array whose columns correspond to ``names``."""
        values = np.asarray(values, dtype=np.float64).copy()
        lookup = {c: i for i, c in enumerate(self.columns)}
        for j, name in enumerate(names):
            if name in lookup:
                i = lookup[name]
                values[..., j] = (values[..., j] - self.means[i]) / self.stds[i]
        return values

    def invert_columns(self, names, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64).copy()
        lookup = {c: i for i, c in enumerate(self.columns)}
        for j, name in enumerate(names):
            if name in lookup:
                i = lookup[name]
                values[..., j] = values[..., j] * self.stds[i] + self.means[i]
        return values

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "means": list(self.means),
            "stds": list(self.stds),
            "std_convention": self.std_convention,
        }

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(
            columns=tuple(d["columns"]),
            means=tuple(d["means"]),
            stds=tuple(d["stds"]),
            std_convention=d.get("std_convention", "population"),
        )


def fit_standardizer(train: Dataset) -> Standardizer:
    """Mean/std parameters over the continuous feature columns of ``train``.

    Missing cells are ignored. A column with fewer than 2 non-missing values
    or zero variance is rejected by name.
    """
    columns, means, stds = [], [], []
    for j in train.continuous_feature_indices():
        col = train.schema[j]
        cells = train.values[:, j]
        cells = cells[~np.isnan(cells)]
        if cells.size < 2:
            raise DataError(f"column {col.name!r}: need at least 2 non-missing values to standardize")
        mu = float(cells.mean())
        sd = float(cells.std())  # population convention
        if sd <= 0:
            raise DataError(f"column {col.name!r}: zero variance, cannot standardize")
        columns.append(col.name)
        means.append(mu)
        stds.append(sd)
    return Standardizer(columns=tuple(columns), means=tuple(means), stds=tuple(stds))


def impute_median(train: Dataset, target: Dataset) -> Dataset:
    """Fill missing cells of ``target`` with train medians (continuous) or
    train modes (discrete; ties resolve to the lowest category index)."""
    fills = {}
    for j, col in enumerate(train.schema):
        if col.role not in ("feature", "response"):
            continue
        cells = train.values[:, j]
        cells = cells[~np.isnan(cells)]
        if cells.size == 0:
            raise DataError(f"column {col.name!r}: all values missing in train, cannot impute")
        if col.kind == "continuous":
            fills[j] = float(np.median(cells))
        else:
            counts = np.bincount(cells.astype(np.int64), minlength=len(col.levels))
            fills[j] = float(np.argmax(counts))  # argmax returns the lowest index on ties
    out = target.values.copy()
    for j, fill in fills.items():
        mask = np.isnan(out[:, j])
        out[mask, j] = fill
    return replace(target, values=out, row_ids=target.row_ids.copy())


def drop_outliers_3sigma(train: Dataset) -> Dataset:
    """Drop rows where any continuous feature cell lies outside 3 standard
    deviations of this dataset's own column mean (population std)."""
    keep = np.ones(train.n, dtype=bool)
    for j in train.continuous_feature_indices():
        cells = train.values[:, j]
        present = ~np.isnan(cells)
        if present.sum() < 2:
            continue
        mu = cells[present].mean()
        sd = cells[present].std()
        if sd == 0:
            continue
        z = (cells - mu) / sd
        keep &= np.isnan(z) | (np.abs(z) <= 3.0)
    return train.take(np.flatnonzero(keep), provenance=f"{train.provenance}[3sigma]")


# Component means and diagonal covariances of the three-cluster generator; the
# response is X1+X2+X3 plus Normal(0, noise_std^2) noise.
_SYNTH_MEANS = ((0.0, -5.0, -5.0), (5.0, 0.0, -5.0), (5.0, 5.0, 0.0))
_SYNTH_VARS = ((5.0, 1.0, 1.0), (1.0, 5.0, 1.0), (1.0, 1.0, 5.0))


@dataclass(frozen=True)
class SyntheticSpec:
    means: tuple = _SYNTH_MEANS
    variances: tuple = _SYNTH_VARS
    points_per_component: int = 200
    noise_std: float = 2.0

    def __post_init__(self):
        if self.noise_std <= 0:
            raise DataError("noise_std must be positive")
        if len(self.means) != len(self.variances):
            raise DataError("means and variances must pair up")

    def to_dict(self) -> dict:
        return {
            "means": [list(m) for m in self.means],
            "variances": [list(v) for v in self.variances],
            "points_per_component": self.points_per_component,
            "noise_std": self.noise_std,
        }

    @classmethod
    def from_dict(cls, d) -> "SyntheticSpec":
        return cls(
            means=tuple(tuple(m) for m in d.get("means", _SYNTH_MEANS)),
            variances=tuple(tuple(v) for v in d.get("variances", _SYNTH_VARS)),
            points_per_component=int(d.get("points_per_component", 200)),
            noise_std=float(d.get("noise_std", 2.0)),
        )


SYNTHETIC_SCHEMA = [
    ColumnSpec("X1", "continuous"),
    ColumnSpec("X2", "continuous"),
    ColumnSpec("X3", "continuous"),
    ColumnSpec("Y", "continuous", role="response"),
]


def gen_synthetic(spec: SyntheticSpec = SyntheticSpec(), seed: int = 0) -> Dataset:
    """Draw the three-cluster 3D dataset: equal-size Gaussian components and a
    noisy additive response. Deterministic per seed."""
    rng = np.random.default_rng(seed)
    blocks = []
    for mean, var in zip(spec.means, spec.variances):
        x = rng.normal(size=(spec.points_per_component, len(mean)))
        x = x * np.sqrt(np.asarray(var)) + np.asarray(mean)
        blocks.append(x)
    x = np.vstack(blocks)
    y = x.sum(axis=1) + rng.normal(scale=spec.noise_std, size=x.shape[0])
    return Dataset(
        schema=list(SYNTHETIC_SCHEMA),
        values=np.column_stack([x, y]),
        provenance=f"synthetic(seed={seed})",
    )


DIABETES_SCHEMA = [
    ColumnSpec("age", "continuous"),
    ColumnSpec("sex", "discrete", levels=("1", "2")),
    ColumnSpec("bmi", "continuous"),
    ColumnSpec("bp", "continuous"),
    ColumnSpec("s1", "continuous"),
    ColumnSpec("s2", "continuous"),
    ColumnSpec("s3", "continuous"),
    ColumnSpec("s4", "continuous"),
    ColumnSpec("s5", "continuous"),
    ColumnSpec("s6", "continuous"),
    ColumnSpec("progression", "continuous", role="response"),
]


def diabetes_dataset() -> Dataset:
    """The 442-instance diabetes progression table (raw units), as bundled
    with scikit-learn; sex is the single discrete feature."""
    from sklearn.datasets import load_diabetes

    raw = load_diabetes(scaled=False)
    values = np.column_stack([raw.data, raw.target]).astype(np.float64)
    sex_col = DIABETES_SCHEMA[1]
    values[:, 1] = values[:, 1] - 1.0  # levels "1"/"2" -> indices 0/1
    assert set(np.unique(values[:, 1])) <= set(range(len(sex_col.levels)))
    return Dataset(schema=list(DIABETES_SCHEMA), values=values, provenance="diabetes")


def schema_to_json(schema) -> list[dict]:
    out = []
    for c in schema:
        d = {"name": c.name, "kind": c.kind, "role": c.role}
        if c.levels is not None:
            d["levels"] = list(c.levels)
        out.append(d)
    return out


def schema_from_json(items) -> list[ColumnSpec]:
    schema = []
    for d in items:
        schema.append(
            ColumnSpec(
                name=d["name"],
                kind=d["kind"],
                role=d.get("role", "feature"),
                levels=tuple(d["levels"]) if "levels" in d and d["levels"] is not None else None,
            )
        )
    _check_schema(schema)
    return schema


def dump_schema(schema, path) -> None:
    with open(path, "w") as fh:
        json.dump(schema_to_json(schema), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_schema(path) -> list[ColumnSpec]:
    with open(path) as fh:
        return schema_from_json(json.load(fh))
