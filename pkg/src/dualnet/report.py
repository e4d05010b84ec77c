"""Report serialization.

Metrics JSON::

    {"task": "binary", "acc": 0.9458, "dr": 0.9446, "far": 0.052,
     "multiclass_acc": null, "counts": {"tp": .., "fn": .., "tn": .., "fp": ..},
     "per_class": [{"name": .., "acc": .., "dr": .., "far": .., "counts": {..}}, ...]}

Metrics CSV has one row per class plus an ``__overall__`` row with columns
``name,acc,dr,far,tp,fn,tn,fp``. Attention CSV is ``rank,feature,score``.
Floats are rounded to 4 decimals; undefined metrics are ``null`` in JSON and
empty cells in CSV.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .explain import AttentionReport
from .metrics import MetricsReport

DECIMALS = 4


def _r(v):
    return None if v is None else round(float(v), DECIMALS)


def metrics_to_dict(report: MetricsReport) -> dict:
    return {
        "task": report.task,
        "acc": _r(report.acc),
        "dr": _r(report.dr),
        "far": _r(report.far),
        "multiclass_acc": _r(report.multiclass_acc),
        "counts": report.counts.to_dict(),
        "per_class": [
            {"name": c.name, "acc": _r(c.acc), "dr": _r(c.dr), "far": _r(c.far), "counts": c.counts.to_dict()}
            for c in report.per_class
        ],
    }


def attention_to_dict(report: AttentionReport, k: int | None = None) -> dict:
    k = len(report.scores) if k is None else k
    return {
        "n_samples": report.n_samples,
        "features": [{"rank": r, "feature": n, "score": _r(s)} for r, n, s in report.top(k)],
        "groups": [{"rank": r, "feature": n, "score": _r(s)} for r, n, s in report.top(k, grouped=True)],
    }


def _open(path, mode="w"):
    try:
        return Path(path).open(mode, newline="")
    except OSError as err:
        raise OSError(f"cannot write report {path}: {err.strerror}") from None


def export_report(report, path, fmt: str | None = None, k: int | None = None, grouped: bool = False) -> Path:
    """Write a MetricsReport or AttentionReport as ``json`` or ``csv`` (picked from the suffix by default)."""
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".") or "json"
    if fmt not in ("json", "csv"):
        raise ValueError(f"format must be 'json' or 'csv', got {fmt!r}")
    if isinstance(report, MetricsReport):
        payload = metrics_to_dict(report)
    elif isinstance(report, AttentionReport):
        payload = attention_to_dict(report, k)
    else:
        raise TypeError(f"cannot export {type(report).__name__}")
    with _open(path) as fh:
        if fmt == "json":
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        elif isinstance(report, MetricsReport):
            w = csv.writer(fh)
            w.writerow(["name", "acc", "dr", "far", "tp", "fn", "tn", "fp"])
            rows = [{"name": "__overall__", **payload}] + payload["per_class"]
            for row in rows:
                c = row["counts"]
                w.writerow([row["name"], *(_cell(row[m]) for m in ("acc", "dr", "far")),
                            c["tp"], c["fn"], c["tn"], c["fp"]])
        else:
            w = csv.writer(fh)
            w.writerow(["rank", "feature", "score"])
            for row in payload["groups" if grouped else "features"]:
                w.writerow([row["rank"], row["feature"], _cell(row["score"])])
    return path


def _cell(v):
    return "" if v is None else f"{v:.{DECIMALS}f}"


def write_series(path, xs, ys, x_name="x", y_name="y") -> Path:
    """Plot-ready two-column CSV."""
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow([x_name, y_name])
        for x, y in zip(xs, ys):
            w.writerow([x, _cell(_r(y)) if isinstance(y, float) or y is None else y])
    return Path(path)
