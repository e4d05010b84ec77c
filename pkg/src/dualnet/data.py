"""Tabular intrusion-detection records: schemas, CSV loading, encoding and splitting."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DataError

SCHEMA_VERSION = 1
PREPROCESSOR_VERSION = 1
KINDS = ("numeric", "nominal", "label", "ignore")
BUILTIN_SCHEMAS = {"nsl-kdd": "nsl_kdd.json", "unsw-nb15": "unsw_nb15.json"}


def _norm(label: str) -> str:
    return label.strip().lower()


@dataclass
class LabelTaxonomy:
    """Normal class name, ordered attack categories and raw-label aliases.

    Multiclass indices are ``0`` for normal and ``1..`` for the categories in
    order; binary mode collapses every category to ``1``.
    """

    normal: str = "normal"
    categories: list = field(default_factory=lambda: ["attack"])
    aliases: dict = field(default_factory=dict)

    def __post_init__(self):
        self._lookup = {_norm(self.normal): 0}
        for i, c in enumerate(self.categories, start=1):
            self._lookup[_norm(c)] = i
        for raw, cat in self.aliases.items():
            key = _norm(cat)
            if key not in self._lookup:
                raise DataError(f"alias {raw!r} points at unknown category {cat!r}")
            self._lookup[_norm(raw)] = self._lookup[key]

    def class_names(self, mode: str) -> list:
        if mode == "binary":
            return [self.normal, "attack"]
        if mode == "multiclass":
            return [self.normal, *self.categories]
        raise ValueError(f"label mode must be 'binary' or 'multiclass', got {mode!r}")

    def index(self, label: str, mode: str) -> int:
        try:
            i = self._lookup[_norm(label)]
        except KeyError:
            raise DataError(f"unknown label {label!r}") from None
        return min(i, 1) if mode == "binary" else i

    def to_dict(self) -> dict:
        return {"normal": self.normal, "categories": list(self.categories), "aliases": dict(self.aliases)}


@dataclass
class Column:
    name: str
    kind: str


@dataclass
class Schema:
    columns: list
    header: bool = True
    labels: LabelTaxonomy = field(default_factory=LabelTaxonomy)
    name: str = "custom"

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("schema column names must be unique")
        for c in self.columns:
            if c.kind not in KINDS:
                raise DataError(f"column {c.name!r}: kind must be one of {KINDS}, got {c.kind!r}")
        if sum(c.kind == "label" for c in self.columns) != 1:
            raise DataError("schema needs exactly one label column")

    @property
    def label_column(self) -> str:
        return next(c.name for c in self.columns if c.kind == "label")

    @property
    def feature_columns(self) -> list:
        return [c for c in self.columns if c.kind in ("numeric", "nominal")]

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        version = d.get("version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise DataError(f"unsupported schema version {version}")
        try:
            columns = [Column(c["name"], c["kind"]) for c in d["columns"]]
        except (KeyError, TypeError) as err:
            raise DataError(f"schema columns need 'name' and 'kind': {err}") from None
        labels = LabelTaxonomy(**d["labels"]) if "labels" in d else LabelTaxonomy()
        return cls(columns, bool(d.get("header", True)), labels, d.get("name", "custom"))

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "name": self.name,
            "header": self.header,
            "columns": [{"name": c.name, "kind": c.kind} for c in self.columns],
            "labels": self.labels.to_dict(),
        }

    @classmethod
    def load(cls, path) -> "Schema":
        """Read a schema JSON file; ``builtin:nsl-kdd`` / ``builtin:unsw-nb15`` name the shipped ones."""
        path = str(path)
        if path.startswith("builtin:"):
            return builtin_schema(path.split(":", 1)[1])
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise DataError(f"cannot read schema {path}: {err.strerror}") from None
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as err:
            raise DataError(f"schema {path} is not valid JSON: {err}") from None


def builtin_schema(name: str) -> Schema:
    try:
        fname = BUILTIN_SCHEMAS[name]
    except KeyError:
        raise DataError(f"no built-in schema {name!r}; choose from {sorted(BUILTIN_SCHEMAS)}") from None
    text = resources.files("dualnet").joinpath("schemas", fname).read_text()
    return Schema.from_dict(json.loads(text))


@dataclass
class RawDataset:
    """Typed columns: numeric columns as float arrays, nominal ones and labels as strings."""

    schema: Schema
    columns: dict
    labels: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    def __len__(self):
        return self.n_rows

    def take(self, idx) -> "RawDataset":
        idx = np.asarray(idx)
        return RawDataset(self.schema, {k: v[idx] for k, v in self.columns.items()}, self.labels[idx])

    @classmethod
    def from_records(cls, schema: Schema, rows) -> "RawDataset":
        return _typed(schema, [list(map(str, r)) for r in rows], first_row=1)


def _typed(schema: Schema, rows: list, first_row: int) -> RawDataset:
    width = len(schema.columns)
    cells = {c.name: [] for c in schema.columns}
    for offset, row in enumerate(rows):
        rowno = first_row + offset
        if len(row) != width:
            raise DataError(f"row {rowno}: expected {width} cells, found {len(row)}")
        for col, cell in zip(schema.columns, row):
            if col.kind == "numeric":
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(f"row {rowno}: column {col.name!r} is not numeric: {cell!r}") from None
                if not math.isfinite(value):
                    raise DataError(f"row {rowno}: column {col.name!r} is not finite: {cell!r}")
                cells[col.name].append(value)
            else:
                cells[col.name].append(cell.strip())
    columns = {}
    for col in schema.columns:
        if col.kind == "numeric":
            columns[col.name] = np.array(cells[col.name], dtype=np.float64)
        elif col.kind == "nominal":
            columns[col.name] = np.array(cells[col.name], dtype=object)
    labels = np.array(cells[schema.label_column], dtype=object)
    return RawDataset(schema, columns, labels)


def load_csv(path, schema: Schema) -> RawDataset:
    """Parse a comma-separated file. Row numbers in errors count data rows from 1."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as err:
        raise DataError(f"cannot read {path}: {err.strerror}") from None
    if schema.header and rows:
        rows = rows[1:]
    return _typed(schema, rows, first_row=1)


def map_labels(raw: RawDataset, mode: str = "binary") -> tuple[np.ndarray, list]:
    """Raw label strings -> class indices, plus the class names for ``mode``."""
    tax = raw.schema.labels
    names = tax.class_names(mode)
    return np.array([tax.index(lab, mode) for lab in raw.labels], dtype=np.int64), names


@dataclass
class EncodedDataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list
    groups: dict
    class_names: list
    task: str = "binary"
    preprocessor: dict | None = None

    def __len__(self):
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def take(self, idx) -> "EncodedDataset":
        idx = np.asarray(idx)
        return EncodedDataset(self.X[idx], self.y[idx], self.feature_names, self.groups,
                              self.class_names, self.task, self.preprocessor)

    def sidecar(self) -> dict:
        return {
            "version": PREPROCESSOR_VERSION,
            "n_rows": int(len(self.y)),
            "n_features": int(self.n_features),
            "feature_names": list(self.feature_names),
            "groups": {k: list(v) for k, v in self.groups.items()},
            "class_names": list(self.class_names),
            "task": self.task,
            "preprocessor": self.preprocessor,
        }

    def save(self, path, fmt: str | None = None) -> Path:
        """Write ``path`` (``.npz`` or ``.csv``) plus a ``<path>.json`` sidecar."""
        path = Path(path)
        fmt = fmt or ("csv" if path.suffix == ".csv" else "npz")
        if fmt == "npz":
            with path.open("wb") as fh:
                np.savez(fh, X=self.X, y=self.y)
        elif fmt == "csv":
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([*self.feature_names, "label"])
                for row, label in zip(self.X, self.y):
                    w.writerow([repr(float(v)) for v in row] + [int(label)])
        else:
            raise ValueError(f"format must be 'npz' or 'csv', got {fmt!r}")
        meta = {**self.sidecar(), "format": fmt}
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "EncodedDataset":
        path = Path(path)
        try:
            meta = json.loads(Path(str(path) + ".json").read_text())
        except OSError:
            raise DataError(f"missing sidecar {path}.json for encoded dataset {path}") from None
        if meta.get("version") != PREPROCESSOR_VERSION:
            raise DataError(f"unsupported encoded dataset version {meta.get('version')}")
        if meta["format"] == "npz":
            with np.load(path) as z:
                X, y = z["X"], z["y"]
        else:
            with path.open(newline="") as fh:
                rows = list(csv.reader(fh))[1:]
            X = np.array([[float(v) for v in r[:-1]] for r in rows]).reshape(len(rows), meta["n_features"])
            y = np.array([int(r[-1]) for r in rows], dtype=np.int64)
        groups = {k: tuple(v) for k, v in meta["groups"].items()}
        return cls(X, y, meta["feature_names"], groups, meta["class_names"], meta["task"], meta["preprocessor"])


class Preprocessor(TransformerMixin, BaseEstimator):
    """One-hot encodes nominal columns and min-max scales numeric ones.

    Statistics come from the data passed to :meth:`fit` only. At transform
    time numeric values outside the fitted range are clipped to [0, 1],
    constant columns map to 0, and unseen categories encode as an all-zero
    group.
    """

    def __init__(self, schema: Schema | None = None, label_mode: str = "binary"):
        self.schema = schema
        self.label_mode = label_mode

    def _schema(self, raw: RawDataset) -> Schema:
        return self.schema if self.schema is not None else raw.schema

    def fit(self, raw: RawDataset, y=None):
        if raw.n_rows < 1:
            raise DataError("cannot fit a preprocessor on zero rows")
        schema = self._schema(raw)
        self.ranges_ = {}
        self.vocabularies_ = {}
        for col in schema.feature_columns:
            values = raw.columns[col.name]
            if col.kind == "numeric":
                self.ranges_[col.name] = (float(values.min()), float(values.max()))
            else:
                vocab = {}
                for v in values:
                    if v == "":
                        raise DataError(f"nominal column {col.name!r} has empty values")
                    vocab.setdefault(v, len(vocab))
                self.vocabularies_[col.name] = list(vocab)
        self.columns_ = [(c.name, c.kind) for c in schema.feature_columns]
        self.taxonomy_ = schema.labels
        self._layout()
        return self

    def _layout(self):
        names, groups, start = [], {}, 0
        for name, kind in self.columns_:
            if kind == "numeric":
                names.append(name)
                width = 1
            else:
                vocab = self.vocabularies_[name]
                names.extend(f"{name}={v}" for v in vocab)
                width = len(vocab)
            groups[name] = (start, start + width)
            start += width
        self.feature_names_ = names
        self.groups_ = groups
        self.n_features_out_ = start

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "feature_names_")
        return np.array(self.feature_names_, dtype=object)

    def transform(self, raw: RawDataset) -> np.ndarray:
        check_is_fitted(self, "feature_names_")
        missing = [n for n, _ in self.columns_ if n not in raw.columns]
        if missing:
            raise DataError(f"input is missing fitted columns {missing}")
        X = np.zeros((raw.n_rows, self.n_features_out_))
        for name, kind in self.columns_:
            lo, hi = self.groups_[name]
            values = raw.columns[name]
            if kind == "numeric":
                cmin, cmax = self.ranges_[name]
                if cmax > cmin:
                    X[:, lo] = np.clip((values.astype(np.float64) - cmin) / (cmax - cmin), 0.0, 1.0)
            else:
                index = {v: i for i, v in enumerate(self.vocabularies_[name])}
                for r, v in enumerate(values):
                    j = index.get(v)
                    if j is not None:
                        X[r, lo + j] = 1.0
        return X

    def inverse_transform(self, X: np.ndarray) -> RawDataset:
        """Decode an encoded matrix back to typed columns (labels are left empty)."""
        check_is_fitted(self, "feature_names_")
        X = np.asarray(X)
        columns = {}
        for name, kind in self.columns_:
            lo, hi = self.groups_[name]
            if kind == "numeric":
                cmin, cmax = self.ranges_[name]
                columns[name] = cmin + X[:, lo] * (cmax - cmin)
            else:
                vocab = self.vocabularies_[name]
                columns[name] = np.array([vocab[j] for j in X[:, lo:hi].argmax(axis=1)], dtype=object)
        schema_cols = [Column(n, k) for n, k in self.columns_] + [Column("label", "label")]
        schema = Schema(schema_cols, labels=self.taxonomy_)
        return RawDataset(schema, columns, np.array([self.taxonomy_.normal] * len(X), dtype=object))

    def encode(self, raw: RawDataset) -> EncodedDataset:
        X = self.transform(raw)
        y, names = map_labels(raw, self.label_mode)
        return EncodedDataset(X, y, list(self.feature_names_), dict(self.groups_), names,
                              self.label_mode, self.state_dict())

    def state_dict(self) -> dict:
        check_is_fitted(self, "feature_names_")
        return {
            "version": PREPROCESSOR_VERSION,
            "label_mode": self.label_mode,
            "columns": [list(c) for c in self.columns_],
            "ranges": {k: list(v) for k, v in self.ranges_.items()},
            "vocabularies": {k: list(v) for k, v in self.vocabularies_.items()},
            "labels": self.taxonomy_.to_dict(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "Preprocessor":
        if state.get("version") != PREPROCESSOR_VERSION:
            raise DataError(f"unsupported preprocessor state version {state.get('version')}")
        prep = cls(label_mode=state["label_mode"])
        prep.columns_ = [tuple(c) for c in state["columns"]]
        prep.ranges_ = {k: tuple(v) for k, v in state["ranges"].items()}
        prep.vocabularies_ = {k: list(v) for k, v in state["vocabularies"].items()}
        prep.taxonomy_ = LabelTaxonomy(**state["labels"])
        prep._layout()
        return prep


def fisher_yates(n: int, rng: np.random.Generator) -> np.ndarray:
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def shuffle(ds: EncodedDataset, seed: int) -> EncodedDataset:
    """Apply one seeded Fisher-Yates permutation to rows and labels together."""
    return ds.take(fisher_yates(len(ds), np.random.default_rng(seed)))


def stratified_kfold(labels, k: int = 10, seed: int = 0, class_names=None) -> list:
    """Split indices into ``k`` (train, test) pairs that preserve class proportions.

    Each class is shuffled with the seeded generator and dealt round-robin
    across folds; the dealing position carries over from one class to the
    next so fold sizes stay within one of each other.
    """
    y = np.asarray(labels.y if isinstance(labels, EncodedDataset) else labels)
    if class_names is None and isinstance(labels, EncodedDataset):
        class_names = labels.class_names
    if k < 2:
        raise DataError(f"k must be at least 2, got {k}")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        if len(members) < k:
            name = class_names[c] if class_names is not None and 0 <= c < len(class_names) else c
            raise DataError(f"class {name!r} has {len(members)} samples, fewer than k={k}")
        members = members[fisher_yates(len(members), rng)]
        fold[members] = (offset + np.arange(len(members))) % k
        offset = (offset + len(members)) % k
    return [(np.flatnonzero(fold != f), np.flatnonzero(fold == f)) for f in range(k)]
