"""Tabular dataset ingestion, splitting and standardization.

Datasets are plain CSV files described by a small INI schema (see
``epigate/schemas``).  Everything downstream consumes :class:`TabularDataset`.
"""
from __future__ import annotations

import configparser
import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

LABEL_TRANSFORMS = ("none", "wine_binarize")
DATA_DIR_ENV = "EPIGATE_DATA_DIR"
_SCHEMA_DIR = Path(__file__).parent / "schemas"


class DatasetError(ValueError):
    """Raised for malformed or unusable dataset inputs."""


@dataclass(frozen=True)
class DatasetSchema:
    name: str
    feature_names: tuple[str, ...]
    n_classes: int
    label_transform: str = "none"
    # ingestion details, not part of the dataset identity
    files: tuple[str, ...] = ()
    delimiter: str = ","
    header: bool = True
    label_column: str | None = None
    drop_columns: tuple[str, ...] = ()
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.feature_names) < 1:
            raise DatasetError("schema needs at least one feature")
        if self.n_classes < 2:
            raise DatasetError("schema needs at least two classes")
        if self.label_transform not in LABEL_TRANSFORMS:
            raise DatasetError(f"unknown label transform {self.label_transform!r}")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


@dataclass
class TabularDataset:
    features: np.ndarray
    labels: np.ndarray
    schema: DatasetSchema
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DatasetError("features must be a 2-D matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DatasetError("row count of features and labels differ")
        if self.features.shape[1] != self.schema.n_features:
            raise DatasetError("feature count does not match schema")
        if not np.all(np.isfinite(self.features)):
            raise DatasetError("features contain NaN or Inf")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.schema.n_classes):
            raise DatasetError("labels out of range")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.schema.n_features

    @property
    def n_classes(self) -> int:
        return self.schema.n_classes

    def subset(self, idx) -> "TabularDataset":
        idx = np.asarray(idx)
        return TabularDataset(self.features[idx], self.labels[idx], self.schema, dict(self.meta))

    def with_features(self, X) -> "TabularDataset":
        return TabularDataset(X, self.labels, self.schema, dict(self.meta))


# ---------------------------------------------------------------------------
# schemas


def _split_list(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def read_schema(path: str | os.PathLike) -> DatasetSchema:
    """Parse an INI schema file with a single ``[dataset]`` section."""
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(path):
        raise DatasetError(f"cannot read schema {path}")
    sec = parser["dataset"]
    delimiter = sec.get("delimiter", ",")
    if delimiter == "semicolon":
        delimiter = ";"
    elif delimiter == "comma":
        delimiter = ","
    return DatasetSchema(
        name=sec["name"],
        feature_names=_split_list(sec["feature_names"]),
        n_classes=sec.getint("n_classes"),
        label_transform=sec.get("label_transform", "none"),
        files=_split_list(sec.get("files", "")),
        delimiter=delimiter,
        header=sec.getboolean("header", True),
        label_column=sec.get("label_column") or None,
        drop_columns=_split_list(sec.get("drop_columns", "")),
        classes=_split_list(sec.get("classes", "")),
    )


def builtin_schema(name: str) -> DatasetSchema:
    path = _SCHEMA_DIR / f"{name}.ini"
    if not path.exists():
        known = sorted(p.stem for p in _SCHEMA_DIR.glob("*.ini"))
        raise DatasetError(f"no built-in schema {name!r}; known: {known}")
    return read_schema(path)


def data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, Path.home() / ".cache" / "epigate"))


# ---------------------------------------------------------------------------
# ingestion


def _read_rows(path: Path, schema: DatasetSchema) -> tuple[list[str] | None, list[list[str]]]:
    with open(path, newline="") as fh:
        if schema.delimiter == "whitespace":
            rows = [line.split() for line in fh if line.strip()]
        else:
            rows = [r for r in csv.reader(fh, delimiter=schema.delimiter) if r]
    if schema.header and rows:
        return [h.strip().strip('"') for h in rows[0]], rows[1:]
    return None, rows


def _apply_label_transform(raw: list[str], schema: DatasetSchema) -> np.ndarray:
    if schema.label_transform == "wine_binarize":
        q = np.array([float(v) for v in raw])
        return (q >= 6).astype(np.int64)
    if schema.classes:
        lookup = {c: i for i, c in enumerate(schema.classes)}
        try:
            return np.array([lookup[v] for v in raw], dtype=np.int64)
        except KeyError as exc:
            raise DatasetError(f"label {exc.args[0]!r} not declared in schema classes") from None
    try:
        return np.array([int(float(v)) for v in raw], dtype=np.int64)
    except ValueError:
        uniq = sorted(set(raw))
        lookup = {c: i for i, c in enumerate(uniq)}
        return np.array([lookup[v] for v in raw], dtype=np.int64)


def load_dataset(path: str | os.PathLike | Sequence[str | os.PathLike], schema: DatasetSchema) -> TabularDataset:
    """Read one CSV (or several, concatenated in order) against ``schema``.

    The label is the column named ``schema.label_column`` or, if unset, the
    last column.  Rows with unparseable feature values are dropped and
    counted in ``meta["rejected_rows"]``.
    """
    paths = [Path(path)] if isinstance(path, (str, os.PathLike)) else [Path(p) for p in path]
    d = schema.n_features
    feats: list[list[float]] = []
    raw_labels: list[str] = []
    rejected = 0
    for p in paths:
        if not p.exists():
            raise DatasetError(f"missing file: {p}")
        header, rows = _read_rows(p, schema)
        ncol = len(header) if header is not None else (len(rows[0]) if rows else 0)
        expected = d + 1 + len(schema.drop_columns)
        if ncol != expected:
            raise DatasetError(f"column mismatch: {p} has {ncol} columns, schema expects {expected}")
        if header is not None:
            label_idx = header.index(schema.label_column) if schema.label_column else ncol - 1
            drop = {header.index(c) for c in schema.drop_columns}
        else:
            label_idx = ncol - 1
            # drop_columns name positional columns as "col<i>" when there is no header
            drop = {int(c[3:]) for c in schema.drop_columns}
        keep = [j for j in range(ncol) if j != label_idx and j not in drop]
        for r in rows:
            if len(r) != ncol:
                rejected += 1
                continue
            try:
                vals = [float(r[j]) for j in keep]
            except ValueError:
                rejected += 1
                continue
            if not all(math.isfinite(v) for v in vals):
                rejected += 1
                continue
            feats.append(vals)
            raw_labels.append(r[label_idx].strip().strip('"'))
    if not feats:
        raise DatasetError("empty dataset")
    labels = _apply_label_transform(raw_labels, schema)
    return TabularDataset(np.array(feats), labels, schema, {"rejected_rows": rejected, "source": [str(p) for p in paths]})


def load_named(name: str, root: str | os.PathLike | None = None) -> TabularDataset:
    """Load a dataset with a built-in schema from the dataset cache directory."""
    schema = builtin_schema(name)
    root = Path(root) if root is not None else data_dir()
    return load_dataset([root / f for f in schema.files], schema)


# ---------------------------------------------------------------------------
# splitting and standardization


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if abs(self.train_frac + self.val_frac + self.test_frac - 1.0) > 1e-9:
            raise DatasetError("split fractions must sum to 1")


def split_sizes(n: int, spec: SplitSpec = SplitSpec()) -> tuple[int, int, int]:
    """Sizes of a two-stage split: hold out ceil((val+test)·n), then halve it.

    The held-out part is divided so the test split receives the ceiling share,
    which reproduces e.g. 9527/2042/2042 for n=13611 and 2667/571/572 for n=3810.
    """
    hold_frac = spec.val_frac + spec.test_frac
    n_hold = math.ceil(hold_frac * n - 1e-9)
    n_test = math.ceil(spec.test_frac / hold_frac * n_hold - 1e-9) if n_hold else 0
    return n - n_hold, n_hold - n_test, n_test


def split(ds: TabularDataset, spec: SplitSpec = SplitSpec()):
    """Random (unstratified) train/val/test split, deterministic in ``spec.seed``."""
    n = len(ds)
    if n < 3:
        raise DatasetError("need at least 3 rows to split")
    n_train, n_val, _ = split_sizes(n, spec)
    perm = np.random.default_rng(spec.seed).permutation(n)
    parts = perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]
    out = []
    for name, idx in zip(("train", "val", "test"), parts):
        sub = ds.subset(idx)
        sub.meta["split"] = name
        sub.meta["indices"] = idx
        out.append(sub)
    return tuple(out)


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.means) / self.stds

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.stds + self.means

    def transform_dataset(self, ds: TabularDataset) -> TabularDataset:
        return ds.with_features(self.apply(ds.features))


def fit_standardizer(train: TabularDataset | np.ndarray) -> Standardizer:
    """Population (ddof=0) z-scoring; constant columns keep std 1."""
    X = train.features if isinstance(train, TabularDataset) else np.asarray(train, dtype=float)
    if X.shape[0] == 0:
        raise DatasetError("cannot fit standardizer on empty data")
    const = np.ptp(X, axis=0) == 0
    # a constant column's mean can be off by an ulp; use the value itself
    means = np.where(const, X[0], X.mean(axis=0))
    stds = X.std(axis=0)
    stds = np.where(const | (stds == 0), 1.0, stds)  # std can underflow for tiny spreads
    return Standardizer(means, stds)


def apply_standardizer(s: Standardizer, X) -> np.ndarray:
    return s.apply(X)


def prepare(ds: TabularDataset, seed: int = 0):
    """Split 70/15/15 and standardize with train statistics.

    Returns ``(train, val, test, standardizer)`` with standardized features.
    """
    train, val, test = split(ds, SplitSpec(seed=seed))
    std = fit_standardizer(train)
    return (std.transform_dataset(train), std.transform_dataset(val),
            std.transform_dataset(test), std)


# ---------------------------------------------------------------------------
# synthetic data


def synth_linear_dataset(d: int, n: int, w=None, seed: int = 0, name: str = "synth_linear") -> TabularDataset:
    """Standard-normal features with label ``1[sigmoid(w·x) > 0.5]``."""
    if d < 1:
        raise DatasetError("d must be >= 1")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d) if w is None else np.asarray(w, dtype=float)
    if w.shape != (d,):
        raise DatasetError("w must have length d")
    X = rng.standard_normal((n, d))
    z = X @ w
    y = (1.0 / (1.0 + np.exp(-z)) > 0.5).astype(np.int64)
    schema = DatasetSchema(name, tuple(f"x{i}" for i in range(d)), 2)
    return TabularDataset(X, y, schema, {"w": w.copy(), "seed": seed})


def synth_blobs(n: int, centers, scale: float = 1.0, seed: int = 0, name: str = "synth_blobs") -> TabularDataset:
    """Isotropic Gaussian clusters, one class per center (used by demos and tests)."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    k, d = centers.shape
    rng = np.random.default_rng(seed)
    y = rng.integers(0, k, size=n)
    X = centers[y] + scale * rng.standard_normal((n, d))
    schema = DatasetSchema(name, tuple(f"x{i}" for i in range(d)), max(k, 2))
    return TabularDataset(X, y, schema, {"seed": seed})
