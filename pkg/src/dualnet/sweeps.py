"""Architecture sweeps: growth rate, the seven-design depth comparison, plain stacking and connectivity.

Each grid point trains one model on a train split and scores it on a
held-out split. Grid points are independent: every point gets its own seed
derived from ``(base seed, point index)`` and the seed is recorded in the row.
"""
from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import ArchitectureConfig, TrainConfig
from .data import EncodedDataset, stratified_kfold
from .exceptions import ConfigError
from .metrics import evaluate
from .network import Network
from .tensor import precision
from .training import predict, train

KINDS = ("growth", "depth", "plainstack", "connectivity")

DEFAULT_GRIDS = {
    "growth": [1, 2, 3, 4, 5, 6],
    "depth": ["residual-4", "residual-8", "residual-12", "dense-1", "dense-2", "dense-3", "dualnet-3"],
    "plainstack": list(range(1, 11)),
    "connectivity": ["concat", "add"],
}

# small widths and short training so a full sweep finishes in minutes on one core;
# with only a few hundred updates, 0.99 batch-norm momentum leaves the running
# variance far from the data, so desk runs use 0.9
DESK_ARCH = dict(stem_width=4, dropout_rate=0.2, bn_momentum=0.9)
DESK_TRAIN = dict(epochs=10, batch_size=16)
DESK_ROWS = 600

ROW_FIELDS = ["config_id", "x", "seed", "acc", "dr", "far", "params", "wall_time"]


@dataclass
class SweepRow:
    config_id: str
    x: object
    seed: int
    acc: float | None
    dr: float | None
    far: float | None
    params: int
    wall_time: float


def parse_grid(kind: str, text: str | None) -> list:
    """Comma-separated grid values; integers for growth/plainstack."""
    if kind not in KINDS:
        raise ConfigError(f"sweep kind must be one of {KINDS}, got {kind!r}")
    if text is None:
        return list(DEFAULT_GRIDS[kind])
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ConfigError("empty sweep grid")
    if kind in ("growth", "plainstack"):
        try:
            values = [int(t) for t in items]
        except ValueError:
            raise ConfigError(f"{kind} grid must be positive integers, got {text!r}") from None
        if min(values) < 1:
            raise ConfigError(f"{kind} grid must be positive integers, got {text!r}")
        return values
    allowed = DEFAULT_GRIDS["connectivity"] if kind == "connectivity" else None
    for t in items:
        if allowed is not None and t not in allowed:
            raise ConfigError(f"connectivity grid values must be concat or add, got {t!r}")
        if kind == "depth":
            _design(t, ArchitectureConfig(family="dense"))
    return items


def _design(name: str, base: ArchitectureConfig) -> ArchitectureConfig:
    family, _, n = name.partition("-")
    if family not in ("residual", "dense", "dualnet", "plainstack") or not n.isdigit() or int(n) < 1:
        raise ConfigError(f"depth design must look like residual-4, dense-2 or dualnet-3, got {name!r}")
    conn = "add" if family == "residual" else "concat"
    return base.replace(family=family, n_blocks=int(n), attention=family == "dualnet", connectivity=conn)


def sweep_configs(kind: str, grid: list, base: ArchitectureConfig) -> list:
    """``[(config_id, x, ArchitectureConfig), ...]`` for one sweep."""
    out = []
    for x in grid:
        if kind == "growth":
            cfg = base.replace(family="dense", n_blocks=1, growth_rate=x, attention=False, connectivity="concat")
            out.append((f"dense-1-k{x}", x, cfg))
        elif kind == "plainstack":
            cfg = base.replace(family="plainstack", n_blocks=x, attention=False, connectivity="concat")
            out.append((f"plain-{x}", x, cfg))
        elif kind == "depth":
            out.append((x, x, _design(x, base)))
        else:
            out.append((f"{base.family}-{base.n_blocks}-{x}", x, base.replace(connectivity=x)))
    return out


def point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def holdout(ds: EncodedDataset, seed: int, max_rows: int | None = None) -> tuple:
    """Stratified 80/20 split, optionally subsampled to ``max_rows`` first."""
    if max_rows is not None and len(ds) > max_rows:
        folds = stratified_kfold(ds, k=int(np.ceil(len(ds) / max_rows)), seed=seed)
        ds = ds.take(np.sort(folds[0][1]))
    train_idx, test_idx = stratified_kfold(ds, k=5, seed=seed)[0]
    return ds.take(train_idx), ds.take(test_idx)


def run_point(cfg: ArchitectureConfig, tc: TrainConfig, train_ds: EncodedDataset, test_ds: EncodedDataset) -> tuple:
    start = time.perf_counter()
    with precision(tc.precision):
        model = Network(cfg)
    train(model, train_ds.X, train_ds.y, tc)
    preds, _ = predict(model, test_ds.X)
    rep = evaluate(preds, test_ds.y, test_ds.class_names, test_ds.task)
    return rep, model.num_params(), time.perf_counter() - start


def run_sweep(kind: str, ds: EncodedDataset, grid=None, base: ArchitectureConfig | None = None,
              train_cfg: TrainConfig | None = None, full_scale: bool = False, progress=None) -> list:
    """Train and score every grid point. Desk scale shrinks widths, epochs and rows unless ``full_scale``."""
    grid = parse_grid(kind, None) if grid is None else grid
    base = base or ArchitectureConfig(family="dense", n_blocks=1, growth_rate=2)
    train_cfg = train_cfg or TrainConfig()
    if not full_scale:
        base = base.replace(**DESK_ARCH)
        train_cfg = TrainConfig.from_dict({**train_cfg.to_dict(), **DESK_TRAIN})
    tr, te = holdout(ds, train_cfg.seed, None if full_scale else DESK_ROWS)
    n_classes = len(ds.class_names)
    rows = []
    for i, (cid, x, cfg) in enumerate(sweep_configs(kind, grid, base)):
        seed = point_seed(train_cfg.seed, i)
        cfg = cfg.replace(seed=seed, n_features=ds.n_features, n_classes=n_classes)
        tc = TrainConfig.from_dict({**train_cfg.to_dict(), "seed": seed})
        rep, params, wall = run_point(cfg, tc, tr, te)
        acc = rep.multiclass_acc if rep.task == "multiclass" else rep.acc
        rows.append(SweepRow(cid, x, seed, acc, rep.dr, rep.far, params, round(wall, 3)))
        if progress:
            progress(rows[-1])
    return rows


def write_rows(rows: list, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ROW_FIELDS)
        w.writeheader()
        for r in rows:
            d = asdict(r)
            for key in ("acc", "dr", "far"):
                d[key] = "" if d[key] is None else f"{d[key]:.4f}"
            w.writerow(d)
    return path


def read_rows(path) -> list:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
