"""``dualnet`` command line: preprocess, train, evaluate, crossval, explain, sweep.

Every command writes into one run directory (``--out``, or a timestamped
directory under ``$DUALNET_OUTPUT_ROOT``, default ``./runs``) and leaves a
``manifest.json`` there. Failures print one JSON line
``{"error": <type>, "message": <text>}`` to stderr and exit 1.
"""
from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ArchitectureConfig, TrainConfig
from .data import EncodedDataset, Preprocessor, Schema, load_csv, stratified_kfold
from .exceptions import ConfigError, DataError, DualNetError, ShapeError
from .explain import attention_importance
from .metrics import evaluate, mean_report
from .network import Network
from .report import export_report, metrics_to_dict, write_series
from .sweeps import KINDS, parse_grid, run_sweep, write_rows
from .synthetic import make_blobs
from .tensor import precision
from .training import predict, train

log = logging.getLogger("dualnet")

OUTPUT_ROOT_ENV = "DUALNET_OUTPUT_ROOT"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: list
    out_dir: str
    seed: int | None = None
    configs: dict = field(default_factory=dict)
    datasets: dict = field(default_factory=dict)
    tool_version: str = __version__
    python: str = platform.python_version()
    numpy: str = np.__version__
    started: str = ""
    seconds: float = 0.0
    outputs: list = field(default_factory=list)
    error: dict | None = None

    def add_dataset(self, path):
        if path is not None and Path(path).is_file():
            self.datasets[str(path)] = sha256_file(path)
            sidecar = Path(str(path) + ".json")
            if sidecar.is_file():
                self.datasets[str(sidecar)] = sha256_file(sidecar)

    def write(self):
        path = Path(self.out_dir) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return path


def run_dir(args) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        stamp = dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
        out = root / f"{args.command}-{stamp}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _load_encoded(path) -> EncodedDataset:
    if path is None:
        raise DataError("--data is required")
    if not Path(path).is_file():
        raise DataError(f"encoded dataset {path} does not exist")
    return EncodedDataset.load(path)


def _arch_config(args, ds: EncodedDataset) -> ArchitectureConfig:
    if args.arch_config:
        cfg = ArchitectureConfig.load(args.arch_config)
    else:
        cfg = ArchitectureConfig.tiny()
    n_classes = len(ds.class_names)
    if cfg.n_features is not None and cfg.n_features != ds.n_features:
        raise ShapeError(f"architecture expects {cfg.n_features} features, data has {ds.n_features}")
    changes = {"n_features": ds.n_features, "n_classes": n_classes}
    if args.seed is not None:
        changes["seed"] = args.seed
    return cfg.replace(**changes)


def _train_config(args) -> TrainConfig:
    tc = TrainConfig.load(args.train_config) if args.train_config else TrainConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "precision", None):
        changes["precision"] = args.precision
    if getattr(args, "epochs", None) is not None:
        changes["epochs"] = args.epochs
    return TrainConfig.from_dict({**tc.to_dict(), **changes}) if changes else tc


def _check_task(args, ds: EncodedDataset):
    if getattr(args, "task", None) and args.task != ds.task:
        raise ConfigError(f"--task {args.task} but {args.data} was encoded for {ds.task}")


def _fit(cfg: ArchitectureConfig, tc: TrainConfig, X, y) -> tuple:
    with precision(tc.precision):
        model = Network(cfg)
    history = train(model, X, y, tc)
    return model, history


def cmd_preprocess(args, out: Path, manifest: RunManifest) -> int:
    if args.data is None:
        raise DataError("--data is required")
    manifest.add_dataset(args.data)
    if args.fit_from:
        state = json.loads(Path(str(args.fit_from) + ".json").read_text())["preprocessor"]
        prep = Preprocessor.from_state(state)
        manifest.add_dataset(args.fit_from)
        if args.task and args.task != prep.label_mode:
            raise ConfigError(f"--task {args.task} conflicts with the reused preprocessor ({prep.label_mode})")
        schema = Schema.load(args.schema) if args.schema else None
        if schema is None:
            raise DataError("--schema is required to parse the CSV")
    else:
        if not args.schema:
            raise DataError("--schema is required")
        schema = Schema.load(args.schema)
        prep = Preprocessor(schema, label_mode=args.task or "binary")
    if args.schema and not str(args.schema).startswith("builtin:"):
        manifest.configs["schema"] = str(args.schema)
        manifest.add_dataset(args.schema)
    raw = load_csv(args.data, schema)
    if not args.fit_from:
        prep.fit(raw)
    ds = prep.encode(raw)
    path = ds.save(out / f"encoded.{args.format}", args.format)
    manifest.outputs += [path.name, path.name + ".json"]
    print(f"F={ds.n_features}")
    print(f"rows={len(ds)} classes={len(ds.class_names)} -> {path}")
    return 0


def cmd_train(args, out: Path, manifest: RunManifest) -> int:
    ds = _load_encoded(args.data)
    manifest.add_dataset(args.data)
    _check_task(args, ds)
    cfg, tc = _arch_config(args, ds), _train_config(args)
    manifest.configs.update(arch=args.arch_config, train=args.train_config)
    manifest.seed = tc.seed
    model, history = _fit(cfg, tc, ds.X, ds.y)
    save_checkpoint(out / "model.ckpt", model, ds.preprocessor, history.to_dict(),
                    class_names=ds.class_names, feature_names=ds.feature_names,
                    groups={k: list(v) for k, v in ds.groups.items()}, task=ds.task)
    _write_json(out / "history.json", history.to_dict())
    cfg.save(out / "arch.json")
    tc.save(out / "train.json")
    manifest.outputs += ["model.ckpt", "history.json", "arch.json", "train.json"]
    if history.loss:
        print(f"final training accuracy {history.accuracy[-1]:.4f} loss {history.loss[-1]:.4f}")
    return 0


def cmd_evaluate(args, out: Path, manifest: RunManifest) -> int:
    ds = _load_encoded(args.data)
    manifest.add_dataset(args.data)
    manifest.add_dataset(args.checkpoint)
    model, ckpt = load_checkpoint(args.checkpoint)
    preds, _ = predict(model, ds.X)
    rep = evaluate(preds, ds.y, ds.class_names, ds.task)
    export_report(rep, out / "metrics.json")
    export_report(rep, out / "metrics.csv")
    manifest.outputs += ["metrics.json", "metrics.csv"]
    d = metrics_to_dict(rep)
    print(json.dumps({k: d[k] for k in ("acc", "dr", "far", "multiclass_acc")}))
    return 0


def cmd_crossval(args, out: Path, manifest: RunManifest) -> int:
    ds = _load_encoded(args.data)
    manifest.add_dataset(args.data)
    _check_task(args, ds)
    cfg, tc = _arch_config(args, ds), _train_config(args)
    manifest.configs.update(arch=args.arch_config, train=args.train_config)
    manifest.seed = tc.seed
    folds = stratified_kfold(ds, k=args.k, seed=tc.seed)
    reports, rows = [], []
    for i, (tr, te) in enumerate(folds):
        # each fold is independent: its own derived seed, fresh model
        seed = int(np.random.SeedSequence([tc.seed, i]).generate_state(1)[0])
        fcfg = cfg.replace(seed=seed)
        ftc = TrainConfig.from_dict({**tc.to_dict(), "seed": seed})
        model, _ = _fit(fcfg, ftc, ds.X[tr], ds.y[tr])
        preds, _ = predict(model, ds.X[te])
        rep = evaluate(preds, ds.y[te], ds.class_names, ds.task)
        reports.append(rep)
        rows.append({"fold": i, "seed": seed, "n_train": int(len(tr)), "n_test": int(len(te)), **metrics_to_dict(rep)})
        log.info("fold %d acc %s", i, rows[-1]["acc"])
    mean = {k: None if v is None else round(v, 4) for k, v in mean_report(reports).items()}
    _write_json(out / "crossval.json", {"k": args.k, "folds": rows, "mean": mean})
    manifest.outputs.append("crossval.json")
    print(json.dumps({"k": args.k, "mean": mean}))
    return 0


def cmd_explain(args, out: Path, manifest: RunManifest) -> int:
    ds = _load_encoded(args.data)
    manifest.add_dataset(args.data)
    manifest.add_dataset(args.checkpoint)
    model, ckpt = load_checkpoint(args.checkpoint)
    if model.attention is None:
        raise ConfigError(f"checkpoint {args.checkpoint} has no self-attention layer; "
                          "importance scores need a model trained with attention")
    X = ds.X if args.samples is None else ds.X[:args.samples]
    rep = attention_importance(model, X, ds.feature_names, ds.groups, args.reduce, args.aggregate)
    export_report(rep, out / "attention.json", k=args.topk)
    export_report(rep, out / "attention_top.csv", k=args.topk)
    export_report(rep, out / "attention_groups.csv", k=args.topk, grouped=True)
    manifest.outputs += ["attention.json", "attention_top.csv", "attention_groups.csv"]
    for rank, name, score in rep.top(args.topk):
        print(f"{rank}\t{name}\t{score:.4f}")
    return 0


def cmd_sweep(args, out: Path, manifest: RunManifest) -> int:
    grid = parse_grid(args.kind, args.grid)
    if args.data:
        ds = _load_encoded(args.data)
        manifest.add_dataset(args.data)
    else:
        seed = 0 if args.seed is None else args.seed
        raw = make_blobs(1000, seed=seed)
        ds = Preprocessor().fit(raw).encode(raw)
        manifest.datasets["synthetic:blobs"] = f"n=1000 seed={seed}"
    base = ArchitectureConfig.load(args.arch_config) if args.arch_config else None
    tc = _train_config(args)
    manifest.configs.update(arch=args.arch_config, train=args.train_config, grid=grid,
                            full_scale=args.full_scale)
    manifest.seed = tc.seed
    rows = run_sweep(args.kind, ds, grid, base, tc, args.full_scale,
                     progress=lambda r: print(f"{r.config_id}\tacc={r.acc}\tparams={r.params}"))
    write_rows(rows, out / f"sweep_{args.kind}.csv")
    write_series(out / f"series_{args.kind}_acc.csv", [r.x for r in rows], [r.acc for r in rows], "x", "acc")
    write_series(out / f"series_{args.kind}_params.csv", [r.x for r in rows], [r.params for r in rows], "x", "params")
    manifest.outputs += [f"sweep_{args.kind}.csv", f"series_{args.kind}_acc.csv", f"series_{args.kind}_params.csv"]
    return 0


COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "crossval": cmd_crossval,
    "explain": cmd_explain,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dualnet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"dualnet {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", help="input CSV (preprocess) or encoded dataset")
        sp.add_argument("--out", help="run directory (default: timestamped under $%s)" % OUTPUT_ROOT_ENV)
        sp.add_argument("--seed", type=int)

    def model_opts(sp):
        sp.add_argument("--arch-config")
        sp.add_argument("--train-config")
        sp.add_argument("--precision", choices=["single", "double"])
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--task", choices=["binary", "multiclass"])

    sp = sub.add_parser("preprocess", help="encode a raw CSV")
    common(sp)
    sp.add_argument("--schema", help="schema JSON path or builtin:nsl-kdd / builtin:unsw-nb15")
    sp.add_argument("--task", choices=["binary", "multiclass"])
    sp.add_argument("--format", choices=["npz", "csv"], default="npz")
    sp.add_argument("--fit-from", help="reuse the preprocessor of an encoded training set")

    sp = sub.add_parser("train", help="train one model")
    common(sp)
    model_opts(sp)

    sp = sub.add_parser("evaluate", help="score a checkpoint on an encoded dataset")
    common(sp)
    sp.add_argument("--checkpoint", required=True)

    sp = sub.add_parser("crossval", help="stratified k-fold cross-validation")
    common(sp)
    model_opts(sp)
    sp.add_argument("--k", type=int, default=10)

    sp = sub.add_parser("explain", help="attention-based feature importance")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--topk", type=int, default=10)
    sp.add_argument("--samples", type=int, help="use only the first N rows")
    sp.add_argument("--reduce", choices=["mean", "max"], default="mean")
    sp.add_argument("--aggregate", choices=["sum", "max"], default="sum")

    sp = sub.add_parser("sweep", help="architecture sweep; writes series CSVs")
    common(sp)
    model_opts(sp)
    sp.add_argument("kind", choices=KINDS)
    sp.add_argument("--grid", help="comma-separated grid values (default: the full grid)")
    sp.add_argument("--full-scale", action="store_true",
                    help="keep configured widths, epochs and all rows instead of the desk-scale reduction")
    return p


def _fail(err: BaseException) -> int:
    msg = " ".join(str(err).split())
    print(json.dumps({"error": type(err).__name__, "message": msg}), file=sys.stderr)
    return 1


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    manifest = None
    try:
        if getattr(args, "topk", 1) < 1:
            raise ConfigError("--topk must be positive")
        out = run_dir(args)
        manifest = RunManifest(["dualnet", *argv], str(out), args.seed,
                               started=dt.datetime.now(dt.timezone.utc).isoformat())
        t0 = time.perf_counter()
        code = COMMANDS[args.command](args, out, manifest)
        manifest.seconds = round(time.perf_counter() - t0, 3)
        manifest.write()
        return code
    except (DualNetError, OSError, ValueError, KeyError, FloatingPointError) as err:
        if manifest is not None:
            # a failed run still documents itself
            manifest.error = {"type": type(err).__name__, "message": str(err)}
            try:
                manifest.write()
            except OSError:
                pass
        return _fail(err)


if __name__ == "__main__":
    sys.exit(main())
