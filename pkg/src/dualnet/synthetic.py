"""Seeded synthetic record sets used by tests, the CLI demo and desk-scale sweeps."""
from __future__ import annotations

import csv

import numpy as np

from .data import Column, LabelTaxonomy, RawDataset, Schema

PROTOCOLS = ["tcp", "udp", "icmp"]
SERVICES = ["http", "smtp", "ftp"]


def blobs_schema(n_numeric: int = 6) -> Schema:
    cols = [Column(f"x{i}", "numeric") for i in range(n_numeric)]
    cols += [Column("proto", "nominal"), Column("service", "nominal"), Column("label", "label")]
    return Schema(cols, header=True, labels=LabelTaxonomy("normal", ["attack"]), name="blobs")


def make_blobs(n: int = 1000, seed: int = 0, n_numeric: int = 6, separation: float = 2.0) -> RawDataset:
    """Two Gaussian blobs (normal vs attack) plus two uninformative nominal columns.

    With the default 6 numeric columns and two 3-value nominal columns the
    encoded width is 12.
    """
    rng = np.random.default_rng(seed)
    y = rng.permutation(np.arange(n) % 2)
    centers = np.where(y[:, None] == 1, separation / 2, -separation / 2)
    numeric = centers + rng.standard_normal((n, n_numeric))
    schema = blobs_schema(n_numeric)
    columns = {f"x{i}": numeric[:, i] for i in range(n_numeric)}
    columns["proto"] = np.array(rng.choice(PROTOCOLS, n), dtype=object)
    columns["service"] = np.array(rng.choice(SERVICES, n), dtype=object)
    labels = np.array(["attack" if v else "normal" for v in y], dtype=object)
    return RawDataset(schema, columns, labels)


def make_planted(n: int = 1000, seed: int = 0, n_features: int = 12, planted: int = 3,
                 separation: float = 4.0) -> RawDataset:
    """Standard-normal noise columns plus one bimodal column that alone decides the label.

    Column ``planted`` is drawn around ``±separation/2`` and the label is
    exactly ``column > 0`` (attack), so no other column carries label
    information.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n_features))
    side = rng.permutation(np.arange(n) % 2)
    X[:, planted] = np.where(side == 1, separation / 2, -separation / 2) + rng.standard_normal(n)
    y = X[:, planted] > 0
    cols = [Column(f"f{i}", "numeric") for i in range(n_features)] + [Column("label", "label")]
    schema = Schema(cols, header=True, labels=LabelTaxonomy("normal", ["attack"]), name="planted")
    labels = np.array(["attack" if v else "normal" for v in y], dtype=object)
    return RawDataset(schema, {f"f{i}": X[:, i] for i in range(n_features)}, labels)


def make_multiclass(n: int = 600, seed: int = 0, n_classes: int = 3, n_numeric: int = 6) -> RawDataset:
    """``n_classes`` Gaussian blobs; class 0 is normal, the rest are attack categories."""
    rng = np.random.default_rng(seed)
    y = rng.permutation(np.arange(n) % n_classes)
    centers = rng.normal(0, 2.0, (n_classes, n_numeric))
    numeric = centers[y] + rng.standard_normal((n, n_numeric))
    cats = [f"attack{i}" for i in range(1, n_classes)]
    cols = [Column(f"x{i}", "numeric") for i in range(n_numeric)]
    cols += [Column("proto", "nominal"), Column("label", "label")]
    schema = Schema(cols, header=True, labels=LabelTaxonomy("normal", cats), name="multiclass")
    columns = {f"x{i}": numeric[:, i] for i in range(n_numeric)}
    columns["proto"] = np.array(rng.choice(PROTOCOLS, n), dtype=object)
    names = ["normal", *cats]
    return RawDataset(schema, columns, np.array([names[v] for v in y], dtype=object))


def write_csv(raw: RawDataset, path):
    """Write a raw dataset with a header row in schema column order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([c.name for c in raw.schema.columns])
        for r in range(raw.n_rows):
            row = []
            for c in raw.schema.columns:
                if c.kind == "label":
                    row.append(raw.labels[r])
                elif c.kind == "numeric":
                    row.append(repr(float(raw.columns[c.name][r])))
                else:
                    row.append(raw.columns[c.name][r])
            w.writerow(row)
