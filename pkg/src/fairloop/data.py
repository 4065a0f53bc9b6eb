"""Loan-application data layer: schema, CSV ingestion, imputation, encoding, splits, binning."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

CATEGORICAL = "categorical"
NUMERIC = "numeric"
UNKNOWN_CATEGORY = "Unknown"


class DataError(ValueError):
    """Schema, parsing, or precondition violation in the data layer."""


@dataclass(frozen=True)
class FeatureSpec:
    """One input feature: its type, protection flag, and how to label it for display."""

    name: str
    kind: str
    protected: bool = False
    display_label: str = ""

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, NUMERIC):
            raise DataError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if not self.display_label:
            object.__setattr__(self, "display_label", self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "protected": self.protected,
            "display_label": self.display_label,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "FeatureSpec":
        return FeatureSpec(
            name=d["name"],
            kind=d["kind"],
            protected=bool(d.get("protected", False)),
            display_label=d.get("display_label", ""),
        )


def _check_schema(schema: Sequence[FeatureSpec]) -> None:
    names = [f.name for f in schema]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise DataError(f"duplicate feature names in schema: {dupes}")


@dataclass(frozen=True)
class Dataset:
    """Immutable table of raw application records indexed by instance id.

    ``columns`` holds one value sequence per schema feature; ``None`` marks a
    missing value (allowed before imputation only).  ``target`` is the binary
    label where 1 means payment difficulty (predicted outcome Reject) and 0
    means Accept; entries may be ``None`` for unlabeled rows.
    """

    schema: tuple[FeatureSpec, ...]
    ids: tuple[str, ...]
    columns: dict[str, tuple]
    target: tuple | None = None

    def __post_init__(self):
        _check_schema(self.schema)
        if len(set(self.ids)) != len(self.ids):
            seen, dupes = set(), []
            for i in self.ids:
                if i in seen:
                    dupes.append(i)
                seen.add(i)
            raise DataError(f"duplicate instance ids: {sorted(set(dupes))}")
        n = len(self.ids)
        for f in self.schema:
            if f.name not in self.columns:
                raise DataError(f"missing column for feature {f.name!r}")
            if len(self.columns[f.name]) != n:
                raise DataError(f"column {f.name!r} has wrong length")
        if self.target is not None and len(self.target) != n:
            raise DataError("target length does not match row count")

    @property
    def n_rows(self) -> int:
        return len(self.ids)

    def feature(self, name: str) -> FeatureSpec:
        for f in self.schema:
            if f.name == name:
                return f
        raise DataError(f"unknown feature {name!r}")

    def index_of(self, instance_id: str) -> int:
        if not hasattr(self, "_id_index"):
            object.__setattr__(self, "_id_index", {i: k for k, i in enumerate(self.ids)})
        try:
            return self._id_index[instance_id]
        except KeyError:
            raise DataError(f"unknown instance id {instance_id!r}") from None

    def has_id(self, instance_id: str) -> bool:
        try:
            self.index_of(instance_id)
            return True
        except DataError:
            return False

    def subset(self, positions: Sequence[int]) -> "Dataset":
        pos = list(positions)
        return Dataset(
            schema=self.schema,
            ids=tuple(self.ids[p] for p in pos),
            columns={f.name: tuple(self.columns[f.name][p] for p in pos) for f in self.schema},
            target=None if self.target is None else tuple(self.target[p] for p in pos),
        )

    def row_values(self, instance_id: str) -> dict:
        p = self.index_of(instance_id)
        return {f.name: self.columns[f.name][p] for f in self.schema}

    def labeled(self) -> bool:
        return self.target is not None and all(t is not None for t in self.target)

    def fingerprint(self) -> str:
        payload = {
            "ids": list(self.ids),
            "columns": {k: list(v) for k, v in sorted(self.columns.items())},
            "target": None if self.target is None else list(self.target),
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def concat(a: Dataset, b: Dataset) -> Dataset:
    """Append the rows of ``b`` after ``a``; schemas must be identical."""
    if a.schema != b.schema:
        raise DataError("cannot concatenate datasets with different schemas")
    if a.target is None or b.target is None:
        target = None
    else:
        target = a.target + b.target
    return Dataset(
        schema=a.schema,
        ids=a.ids + b.ids,
        columns={f.name: a.columns[f.name] + b.columns[f.name] for f in a.schema},
        target=target,
    )


def _parse_numeric(cell: str):
    s = cell.strip()
    if not s:
        return None
    try:
        v = float(s)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _parse_target(cell: str):
    s = cell.strip()
    if not s:
        return None
    try:
        v = float(s)
    except ValueError:
        return None
    if v not in (0.0, 1.0):
        return None
    return int(v)


def load_csv(
    path: str | Path,
    schema: Sequence[FeatureSpec],
    id_column: str = "id",
    target_column: str = "target",
) -> Dataset:
    """Read an RFC-4180 CSV into a Dataset.

    The header must contain ``id_column`` and every schema feature name.
    Unparseable cells are recorded as missing; duplicate ids are an error.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"csv file not found: {path}")
    _check_schema(schema)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"csv file is empty: {path}") from None
        header = [h.strip() for h in header]
        col_idx = {h: i for i, h in enumerate(header)}
        missing_cols = [f.name for f in schema if f.name not in col_idx]
        if id_column not in col_idx:
            missing_cols.insert(0, id_column)
        if missing_cols:
            raise DataError(f"csv header mismatch, missing columns: {missing_cols}")
        has_target = target_column in col_idx

        ids: list[str] = []
        seen: set[str] = set()
        cols: dict[str, list] = {f.name: [] for f in schema}
        target: list = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            rid = row[col_idx[id_column]].strip()
            if rid in seen:
                raise DataError(f"duplicate instance id {rid!r} (line {lineno})")
            seen.add(rid)
            ids.append(rid)
            for f in schema:
                cell = row[col_idx[f.name]] if col_idx[f.name] < len(row) else ""
                if f.kind == NUMERIC:
                    cols[f.name].append(_parse_numeric(cell))
                else:
                    s = cell.strip()
                    cols[f.name].append(s if s else None)
            if has_target:
                cell = row[col_idx[target_column]] if col_idx[target_column] < len(row) else ""
                target.append(_parse_target(cell))

    return Dataset(
        schema=tuple(schema),
        ids=tuple(ids),
        columns={k: tuple(v) for k, v in cols.items()},
        target=tuple(target) if has_target else None,
    )


def impute(ds: Dataset) -> Dataset:
    """Fill missing values: numeric columns take the column median of observed
    values, categorical columns take the literal category "Unknown"."""
    new_cols: dict[str, tuple] = {}
    for f in ds.schema:
        vals = ds.columns[f.name]
        if f.kind == NUMERIC:
            observed = [v for v in vals if v is not None]
            if not observed:
                if any(v is None for v in vals):
                    raise DataError(
                        f"cannot impute feature {f.name!r}: all values missing,"
                        " median undefined"
                    )
                new_cols[f.name] = vals
                continue
            med = float(np.median(observed))
            new_cols[f.name] = tuple(med if v is None else v for v in vals)
        else:
            new_cols[f.name] = tuple(UNKNOWN_CATEGORY if v is None else v for v in vals)
    return Dataset(schema=ds.schema, ids=ds.ids, columns=new_cols, target=ds.target)


@dataclass(frozen=True)
class ColumnSpec:
    """Maps one encoded column back to its source feature (and category, for one-hot)."""

    feature: str
    category: str | None = None

    def to_dict(self) -> dict:
        return {"feature": self.feature, "category": self.category}


@dataclass(frozen=True)
class Encoder:
    """Fitted encoding state: category vocabularies and numeric normalization ranges.

    Amount features pass through log(1+x) before min-max scaling; all numeric
    columns land in [0, 1].  Constant numeric columns encode to all zeros and
    record a warning instead of failing.
    """

    schema: tuple[FeatureSpec, ...]
    columns: tuple[ColumnSpec, ...]
    categories: dict[str, tuple[str, ...]]
    numeric_range: dict[str, tuple[float, float]]
    amount_features: tuple[str, ...]
    warnings: tuple[str, ...] = ()

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def group_columns(self) -> dict[str, tuple[int, ...]]:
        groups: dict[str, list[int]] = {}
        for i, c in enumerate(self.columns):
            groups.setdefault(c.feature, []).append(i)
        return {k: tuple(v) for k, v in groups.items()}

    def _numeric_value(self, name: str, v: float) -> float:
        if name in self.amount_features:
            v = math.log1p(max(v, 0.0))
        lo, hi = self.numeric_range[name]
        if hi <= lo:
            return 0.0
        x = (v - lo) / (hi - lo)
        return min(max(x, 0.0), 1.0)

    def transform(self, ds: Dataset) -> "EncodedMatrix":
        n = ds.n_rows
        X = np.zeros((n, self.n_columns), dtype=np.float64, order="F")
        col_of: dict[tuple[str, str], int] = {}
        for i, c in enumerate(self.columns):
            if c.category is not None:
                col_of[(c.feature, c.category)] = i
        num_col = {c.feature: i for i, c in enumerate(self.columns) if c.category is None}

        for f in self.schema:
            vals = ds.columns[f.name]
            if any(v is None for v in vals):
                raise DataError(f"feature {f.name!r} has missing values; impute first")
            if f.kind == CATEGORICAL:
                for r, v in enumerate(vals):
                    key = (f.name, str(v))
                    if key not in col_of:
                        raise DataError(
                            f"category {v!r} of feature {f.name!r} not seen at fit time"
                        )
                    X[r, col_of[key]] = 1.0
            else:
                j = num_col[f.name]
                for r, v in enumerate(vals):
                    X[r, j] = self._numeric_value(f.name, float(v))

        y = None
        if ds.target is not None and all(t is not None for t in ds.target):
            y = np.asarray(ds.target, dtype=np.float64)
        return EncodedMatrix(
            X=X,
            column_map=self.columns,
            ids=ds.ids,
            y=y,
            warnings=self.warnings,
        )

    def transform_values(self, row: Mapping[str, object]) -> np.ndarray:
        """Encode a single raw-value mapping into a 1-d row vector."""
        x = np.zeros(self.n_columns, dtype=np.float64)
        for i, c in enumerate(self.columns):
            v = row[c.feature]
            if c.category is not None:
                if str(v) == c.category:
                    x[i] = 1.0
            else:
                x[i] = self._numeric_value(c.feature, float(v))
        return x

    def to_dict(self) -> dict:
        return {
            "schema": [f.to_dict() for f in self.schema],
            "columns": [c.to_dict() for c in self.columns],
            "categories": {k: list(v) for k, v in self.categories.items()},
            "numeric_range": {k: list(v) for k, v in self.numeric_range.items()},
            "amount_features": list(self.amount_features),
            "warnings": list(self.warnings),
        }

    @staticmethod
    def from_dict(d: Mapping) -> "Encoder":
        return Encoder(
            schema=tuple(FeatureSpec.from_dict(f) for f in d["schema"]),
            columns=tuple(ColumnSpec(c["feature"], c["category"]) for c in d["columns"]),
            categories={k: tuple(v) for k, v in d["categories"].items()},
            numeric_range={k: (float(v[0]), float(v[1])) for k, v in d["numeric_range"].items()},
            amount_features=tuple(d["amount_features"]),
            warnings=tuple(d.get("warnings", ())),
        )


def fit_encoder(ds: Dataset, amount_features: Iterable[str] = ()) -> Encoder:
    """Fit category vocabularies and numeric ranges on ``ds`` (imputed)."""
    amounts = tuple(amount_features)
    for a in amounts:
        if ds.feature(a).kind != NUMERIC:
            raise DataError(f"amount feature {a!r} is not numeric")
    columns: list[ColumnSpec] = []
    categories: dict[str, tuple[str, ...]] = {}
    numeric_range: dict[str, tuple[float, float]] = {}
    warnings: list[str] = []
    for f in ds.schema:
        vals = ds.columns[f.name]
        if any(v is None for v in vals):
            raise DataError(f"feature {f.name!r} has missing values; impute first")
        if f.kind == CATEGORICAL:
            cats = tuple(sorted({str(v) for v in vals}))
            categories[f.name] = cats
            columns.extend(ColumnSpec(f.name, c) for c in cats)
        else:
            arr = [float(v) for v in vals]
            if f.name in amounts:
                if any(v < 0 for v in arr):
                    warnings.append(f"amount feature {f.name!r}: negative values clamped to 0")
                arr = [math.log1p(max(v, 0.0)) for v in arr]
            lo, hi = min(arr), max(arr)
            if hi <= lo:
                warnings.append(f"constant numeric column {f.name!r} encoded as all zeros")
            numeric_range[f.name] = (lo, hi)
            columns.append(ColumnSpec(f.name, None))
    return Encoder(
        schema=ds.schema,
        columns=tuple(columns),
        categories=categories,
        numeric_range=numeric_range,
        amount_features=amounts,
        warnings=tuple(warnings),
    )


@dataclass(frozen=True)
class EncodedMatrix:
    """Numeric design matrix with an invertible column map back to raw features."""

    X: np.ndarray
    column_map: tuple[ColumnSpec, ...]
    ids: tuple[str, ...]
    y: np.ndarray | None = None
    warnings: tuple[str, ...] = ()

    @property
    def n_rows(self) -> int:
        return int(self.X.shape[0])

    @property
    def n_columns(self) -> int:
        return int(self.X.shape[1])

    def group_columns(self) -> dict[str, tuple[int, ...]]:
        groups: dict[str, list[int]] = {}
        for i, c in enumerate(self.column_map):
            groups.setdefault(c.feature, []).append(i)
        return {k: tuple(v) for k, v in groups.items()}


def encode(ds: Dataset, amount_features: Iterable[str] = ()) -> EncodedMatrix:
    """Fit an encoder on ``ds`` and transform it in one step."""
    return fit_encoder(ds, amount_features).transform(ds)


@dataclass(frozen=True)
class UndersampleSplit:
    """Balanced train split of ``n_train`` rows plus a holdout of ``n_holdout``."""

    n_train: int
    n_holdout: int


@dataclass(frozen=True)
class StratifiedSplit:
    """Train split of ``n_train`` rows preserving target proportions; test is
    the remainder, or a second stratified draw of ``n_test`` rows if given."""

    n_train: int
    n_test: int | None = None


def _class_positions(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if ds.target is None or any(t is None for t in ds.target):
        raise DataError("split requires a fully labeled dataset")
    y = np.asarray(ds.target)
    return np.flatnonzero(y == 1), np.flatnonzero(y == 0)


def _proportional_counts(n: int, class_counts: Sequence[int]) -> list[int]:
    # Largest-remainder allocation: totals n, each class within one row of exact share.
    total = sum(class_counts)
    exact = [n * c / total for c in class_counts]
    base = [int(math.floor(e)) for e in exact]
    rem = n - sum(base)
    order = sorted(range(len(exact)), key=lambda i: (exact[i] - base[i]), reverse=True)
    for i in order[:rem]:
        base[i] += 1
    return base


def split(
    ds: Dataset,
    mode: UndersampleSplit | StratifiedSplit,
    seed: int,
) -> tuple[Dataset, Dataset]:
    """Partition ``ds`` into (train, test) without replacement, seeded."""
    rng = np.random.default_rng(seed)
    pos, neg = _class_positions(ds)

    if isinstance(mode, UndersampleSplit):
        if mode.n_train % 2 != 0:
            raise DataError("undersample split needs an even train size to balance classes")
        per_class = mode.n_train // 2
        minority = min(len(pos), len(neg))
        if per_class > minority:
            raise DataError(
                f"insufficient minority rows: need {per_class} per class,"
                f" minority class has {minority}"
            )
        take_pos = rng.choice(pos, size=per_class, replace=False)
        take_neg = rng.choice(neg, size=per_class, replace=False)
        train_pos = np.sort(np.concatenate([take_pos, take_neg]))
        rest = np.setdiff1d(np.arange(ds.n_rows), train_pos, assume_unique=False)
        if mode.n_holdout > len(rest):
            raise DataError(
                f"holdout size {mode.n_holdout} exceeds remaining {len(rest)} rows"
            )
        test_pos = np.sort(rng.choice(rest, size=mode.n_holdout, replace=False))
        return ds.subset(train_pos.tolist()), ds.subset(test_pos.tolist())

    if isinstance(mode, StratifiedSplit):
        counts = [len(pos), len(neg)]
        if mode.n_train > ds.n_rows:
            raise DataError(f"requested {mode.n_train} rows, only {ds.n_rows} available")
        alloc = _proportional_counts(mode.n_train, counts)
        if alloc[0] > len(pos) or alloc[1] > len(neg):
            raise DataError("stratified split allocation exceeds class counts")
        take_pos = rng.choice(pos, size=alloc[0], replace=False)
        take_neg = rng.choice(neg, size=alloc[1], replace=False)
        train_idx = np.sort(np.concatenate([take_pos, take_neg]))
        rest = np.setdiff1d(np.arange(ds.n_rows), train_idx)
        if mode.n_test is None:
            return ds.subset(train_idx.tolist()), ds.subset(rest.tolist())
        if mode.n_test > len(rest):
            raise DataError(
                f"test size {mode.n_test} exceeds remaining {len(rest)} rows"
            )
        rest_pos = np.intersect1d(rest, pos)
        rest_neg = np.intersect1d(rest, neg)
        t_alloc = _proportional_counts(mode.n_test, counts)
        if t_alloc[0] > len(rest_pos) or t_alloc[1] > len(rest_neg):
            raise DataError("stratified test allocation exceeds remaining class counts")
        t_pos = rng.choice(rest_pos, size=t_alloc[0], replace=False)
        t_neg = rng.choice(rest_neg, size=t_alloc[1], replace=False)
        test_idx = np.sort(np.concatenate([t_pos, t_neg]))
        return ds.subset(train_idx.tolist()), ds.subset(test_idx.tolist())

    raise DataError(f"unknown split mode: {mode!r}")


def _fmt_edge(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return f"{v:g}"


def default_bin_labels(edges: Sequence[float]) -> tuple[str, ...]:
    if len(edges) == 1:
        return (f"<={_fmt_edge(edges[0])}", f">{_fmt_edge(edges[0])}")
    labels = [f"<={_fmt_edge(edges[0])}"]
    for a, b in zip(edges, edges[1:]):
        labels.append(f"({_fmt_edge(a)}, {_fmt_edge(b)}]")
    labels.append(f">{_fmt_edge(edges[-1])}")
    return tuple(labels)


@dataclass(frozen=True)
class BinningRule:
    """Cut points for one numeric feature.  ``coverage`` is the value range the
    rule was fit on (or the edge span for explicit rules); values outside it
    are clamped into the boundary bins with a warning."""

    feature: str
    edges: tuple[float, ...]
    labels: tuple[str, ...] = ()
    coverage: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.edges:
            raise DataError(f"binning rule for {self.feature!r} has no edges")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise DataError(f"binning edges for {self.feature!r} must strictly increase")
        if not self.labels:
            object.__setattr__(self, "labels", default_bin_labels(self.edges))
        if len(self.labels) != len(self.edges) + 1:
            raise DataError(
                f"binning rule for {self.feature!r} needs {len(self.edges) + 1} labels"
            )

    def assign(self, value: float) -> str:
        i = int(np.searchsorted(np.asarray(self.edges), value, side="left"))
        return self.labels[i]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "edges": list(self.edges),
            "labels": list(self.labels),
            "coverage": None if self.coverage is None else list(self.coverage),
        }

    @staticmethod
    def from_dict(d: Mapping) -> "BinningRule":
        cov = d.get("coverage")
        return BinningRule(
            feature=d["feature"],
            edges=tuple(float(e) for e in d["edges"]),
            labels=tuple(d.get("labels", ())),
            coverage=None if cov is None else (float(cov[0]), float(cov[1])),
        )


def explicit_binning(feature: str, edges: Sequence[float]) -> BinningRule:
    """Build a rule from user-supplied edges.  Two or more edges imply the user
    meant them to span the data, so the edge span becomes the coverage."""
    edges = tuple(float(e) for e in edges)
    coverage = (edges[0], edges[-1]) if len(edges) >= 2 else None
    return BinningRule(feature=feature, edges=edges, coverage=coverage)


def fit_binning(ds: Dataset, feature: str) -> BinningRule:
    """Default rule: quartile edges computed on the given (training) split."""
    f = ds.feature(feature)
    if f.kind != NUMERIC:
        raise DataError(f"cannot bin non-numeric feature {feature!r}")
    vals = [float(v) for v in ds.columns[feature] if v is not None]
    if not vals:
        raise DataError(f"no observed values to fit bins for {feature!r}")
    arr = np.asarray(vals)
    qs = np.quantile(arr, [0.25, 0.5, 0.75])
    edges = []
    for q in qs:
        q = float(q)
        if not edges or q > edges[-1]:
            edges.append(q)
    if not edges:
        edges = [float(arr[0])]
    return BinningRule(
        feature=feature,
        edges=tuple(edges),
        coverage=(float(arr.min()), float(arr.max())),
    )


def bin_assign(ds: Dataset, rule: BinningRule) -> tuple[dict[str, str], list[str]]:
    """Map every instance to a bin label; returns (assignment, warnings)."""
    f = ds.feature(rule.feature)
    if f.kind != NUMERIC:
        raise DataError(f"cannot bin non-numeric feature {rule.feature!r}")
    out: dict[str, str] = {}
    warnings: list[str] = []
    for rid, v in zip(ds.ids, ds.columns[rule.feature]):
        if v is None:
            raise DataError(f"instance {rid!r} has missing {rule.feature!r}; impute first")
        v = float(v)
        if rule.coverage is not None and not (rule.coverage[0] <= v <= rule.coverage[1]):
            warnings.append(
                f"{rule.feature}={_fmt_edge(v)} for instance {rid} outside covered range"
                f" [{_fmt_edge(rule.coverage[0])}, {_fmt_edge(rule.coverage[1])}];"
                " clamped to boundary bin"
            )
        out[rid] = rule.assign(v)
    return out, warnings
