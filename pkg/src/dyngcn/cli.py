"""Command-line entry point: ``dyngcn {train,evaluate,mccv,gradcheck,params,synth}``.

Every command writes line-delimited JSON records to stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .data import (DatasetError, load_dataset, save_dataset, synth_dynamic_communities,
                   synth_graph_sequences)
from .evaluation import monte_carlo_splits, wilcoxon_signed_rank
from .gradcheck import run_gradcheck
from .models import GRAPH_MODELS, VERTEX_MODELS, Model, ModelSpec, count_params, named_model, param_breakdown
from .training import TrainConfig, evaluate, train

log = logging.getLogger("dyngcn")

METRIC_FLAG = {"acc": "accuracy", "f1": "f1", "accuracy": "accuracy"}


class CLIError(Exception):
    pass


def emit(record: dict, stream=None) -> str:
    line = json.dumps(record, sort_keys=True)
    print(line, file=stream or sys.stdout)
    return line


@dataclass
class ExperimentConfig:
    """Everything needed to rerun a train or mccv invocation."""

    data: str
    model_spec: dict
    train: dict
    iterations: int = 10
    test_frac: float = 0.3
    val_frac: float = 0.2
    iteration: int = 0
    seed: int = 0
    out: str | None = None
    models: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not 0 < self.test_frac < 1 or not 0 <= self.val_frac < 1:
            raise CLIError("test/validation fractions out of range")
        if self.iterations < 1:
            raise CLIError("--iterations must be at least 1")
        if not 0 <= self.iteration < self.iterations:
            raise CLIError("--iteration must index one of the planned splits")


# -- helpers -----------------------------------------------------------------

def _load(path) -> "Dataset":  # noqa: F821
    if path is None:
        raise CLIError("--data is required")
    p = Path(path)
    if not p.exists():
        raise CLIError(f"dataset path not found: {p}")
    return load_dataset(p)


def _spec_for(args, ds, name: str) -> ModelSpec:
    if getattr(args, "model_spec", None) and name == args.model:
        return ModelSpec.from_dict(args.model_spec)
    return named_model(name, ds.task, ds.feature_dim, ds.num_classes, num_vertices=ds.num_vertices,
                       gc=args.gc, lstm=args.lstm, fc=args.fc, dropout=args.dropout,
                       candidate_tanh=args.candidate_tanh)


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(lr=args.lr, max_epochs=args.epochs, seed=seed, metric=METRIC_FLAG[args.metric])


def _plan(args, ds):
    pool, classes = ds.samples()
    return monte_carlo_splits(classes, args.iterations, args.test_frac, args.val_frac,
                              seed=args.seed, pool=pool)


def _run_split(args, ds, name: str, split, iteration: int):
    seed = args.seed + iteration
    spec = _spec_for(args, ds, name)
    model = Model(spec, seed=seed)
    result = train(model, ds, split.train, split.val, _train_config(args, seed))
    test = {m: evaluate(model, ds, split.test, result.snapshots[m])[m] for m in ("accuracy", "f1")}
    return spec, model, result, test


# -- commands ----------------------------------------------------------------

def cmd_train(args) -> int:
    ds = _load(args.data)
    cfg = ExperimentConfig(data=str(args.data), model_spec=_spec_for(args, ds, args.model).to_dict(),
                           train=_train_config(args, args.seed + args.iteration).to_dict(),
                           iterations=args.iterations, test_frac=args.test_frac,
                           val_frac=args.val_frac, iteration=args.iteration, seed=args.seed,
                           out=args.out)
    plan = _plan(args, ds)
    split = plan[args.iteration]
    spec, model, result, test = _run_split(args, ds, args.model, split, args.iteration)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
    (out / "split.json").write_text(json.dumps({"train": split.train.tolist(), "val": split.val.tolist(),
                                                "test": split.test.tolist()}) + "\n")
    with open(out / "history.jsonl", "w", encoding="utf-8") as fh:
        for row in result.history:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    for m, snap in result.snapshots.items():
        np.savez(out / f"params_{m}.npz", **snap)
    selected = METRIC_FLAG[args.metric]
    records = []
    for m in ("accuracy", "f1"):
        epoch = result.best_epoch[m]
        row = result.history[epoch - 1]
        records.append({"record": "final", "model": spec.name, "selection": m, "epoch": epoch,
                        "val_" + m: row["val_" + m], "test_" + m: test[m],
                        "selected": m == selected})
    with open(out / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(emit(r) + "\n")
    return 0


def cmd_evaluate(args) -> int:
    ds = _load(args.data)
    run = Path(args.run)
    if not (run / "config.json").is_file():
        raise CLIError(f"no training run found at {run}")
    cfg = json.loads((run / "config.json").read_text())
    spec = ModelSpec.from_dict(cfg["model_spec"])
    model = Model(spec)
    metric = METRIC_FLAG[args.metric]
    with np.load(run / f"params_{metric}.npz") as npz:
        params = {k: npz[k] for k in npz.files}
    split = json.loads((run / "split.json").read_text())
    if args.split == "all":
        indices = ds.samples()[0]
    else:
        indices = np.asarray(split[args.split], dtype=np.int64)
    scores = evaluate(model, ds, indices, params)
    emit({"record": "evaluate", "model": spec.name, "snapshot": metric, "split": args.split, **scores})
    return 0


def _mccv_job(payload):
    args, name, iteration = payload
    ds = _load(args.data)
    split = _plan(args, ds)[iteration]
    _, _, result, test = _run_split(args, ds, name, split, iteration)
    return {"record": "iteration", "model": name, "iteration": iteration,
            "accuracy": test["accuracy"], "f1": test["f1"],
            "epoch_accuracy": result.best_epoch["accuracy"], "epoch_f1": result.best_epoch["f1"]}


def run_mccv(args) -> list[dict]:
    """Train every model on one shared split plan; returns all records."""
    listed = [m.strip() for m in args.models.split(",") if m.strip()]
    if not listed:
        raise CLIError("--models lists no models")
    names = list(dict.fromkeys(listed))
    pairs = list(combinations(names, 2))
    if len(names) == 1 and len(listed) > 1:
        pairs = [(names[0], names[0])]
    ds = _load(args.data)
    allowed = VERTEX_MODELS if ds.task == "vertex" else GRAPH_MODELS
    for n in names:
        if n not in allowed:
            raise CLIError(f"unknown {ds.task} model {n!r}; choose from {', '.join(allowed)}")
    _plan(args, ds)  # surface stratification errors before any training
    jobs = [(args, n, i) for n in names for i in range(args.iterations)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_mccv_job, jobs))
    else:
        rows = [_mccv_job(j) for j in jobs]
    records = list(rows)
    for n in names:
        for m in ("accuracy", "f1"):
            vals = np.array([r[m] for r in rows if r["model"] == n])
            records.append({"record": "summary", "model": n, "metric": m, "mean": float(vals.mean()),
                            "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0, "n": len(vals)})
    for a, b in pairs:
        for m in ("accuracy", "f1"):
            va = [r[m] for r in rows if r["model"] == a]
            vb = [r[m] for r in rows if r["model"] == b]
            rec = {"record": "wilcoxon", "metric": m, "model_a": a, "model_b": b,
                   "alternative": "a > b", "mean_gap": float(np.mean(va) - np.mean(vb))}
            try:
                res = wilcoxon_signed_rank(va, vb)
                rec.update(pvalue=res.pvalue, statistic=res.statistic, n=res.n)
            except ValueError as exc:
                rec["error"] = str(exc)
                print(f"warning: wilcoxon {a} vs {b} ({m}): {exc}", file=sys.stderr)
            records.append(rec)
    return records


def cmd_mccv(args) -> int:
    records = run_mccv(args)
    lines = [emit(r) for r in records]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "mccv.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradcheck()
    failed = [r for r in results if not r.passed]
    for r in results:
        emit({"record": "gradcheck", "layer": r.name, "max_rel_err": r.max_rel_err,
              "tolerance": r.tolerance, "passed": r.passed})
    if failed:
        print("gradient check failed for: " + ", ".join(r.name for r in failed), file=sys.stderr)
        return 1
    return 0


def cmd_params(args) -> int:
    spec = named_model(args.model, args.task, args.d, args.k, num_vertices=args.num_vertices,
                       gc=args.gc, lstm=args.lstm, fc=args.fc)
    for layer, n in param_breakdown(spec):
        emit({"record": "layer", "layer": layer, "params": n})
    total = count_params(spec)
    emit({"record": "total", "model": args.model, "params": total})
    return 0


def cmd_synth(args) -> int:
    if args.task == "vertex":
        ds = synth_dynamic_communities(args.num_vertices or 100, args.steps, args.d, args.k, drift=args.drift,
                                       noise=args.noise, seed=args.seed, p_in=args.p_in,
                                       p_out=args.p_out, informative_steps=args.informative_steps,
                                       labeled_fraction=args.labeled_fraction)
    else:
        ds = synth_graph_sequences(args.num_sequences, args.num_vertices or 12, args.steps, args.d, args.k,
                                   noise=args.noise, seed=args.seed, min_length=args.min_length)
    path = save_dataset(ds, args.out)
    emit({"record": "synth", "manifest": str(path), "task": ds.task, "T": ds.num_steps,
          "num_vertices": ds.num_vertices, "labeled": int(ds.labels.mask.any(axis=0).sum())
          if ds.task == "vertex" else len(ds.graphs)})
    return 0


# -- argument parsing --------------------------------------------------------

def _model_flags(p, default_model: str | None = "wd-gcn"):
    if default_model is not None:
        p.add_argument("--model", default=default_model, help="architecture name")
    p.add_argument("--task", choices=("vertex", "graph"), default="vertex")
    p.add_argument("--gc", type=int, default=100, help="wd-GC / cd-GC / GC nodes")
    p.add_argument("--lstm", type=int, default=100, help="LSTM nodes")
    p.add_argument("--fc", type=int, default=100, help="first FC layer nodes (baselines)")
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--candidate-tanh", action="store_true", help="tanh instead of sigmoid for the LSTM candidate")


def _train_flags(p):
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--metric", choices=("acc", "f1"), default="acc")
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--test-frac", type=float, default=0.3)
    p.add_argument("--val-frac", type=float, default=0.2)
    p.add_argument("--config", help="JSON experiment config supplying defaults for these flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyngcn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model on one split")
    _model_flags(p)
    _train_flags(p)
    p.add_argument("--iteration", type=int, default=0, help="which split of the plan to use")
    p.set_defaults(func=cmd_train, model_spec=None)

    p = sub.add_parser("evaluate", help="score a trained run")
    p.add_argument("--data", required=True)
    p.add_argument("--run", required=True, help="output directory of a train run")
    p.add_argument("--metric", choices=("acc", "f1"), default="acc", help="which snapshot")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("mccv", help="Monte Carlo cross-validation over a model list")
    _model_flags(p, default_model=None)
    _train_flags(p)
    p.add_argument("--models", default="wd-gcn,cd-gcn", help="comma-separated model names")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_mccv, model=None, model_spec=None)

    p = sub.add_parser("gradcheck", help="finite-difference check of all layers and models")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("params", help="exact parameter count")
    _model_flags(p)
    p.add_argument("--d", type=int, required=True, help="input feature dimension")
    p.add_argument("--k", type=int, required=True, help="number of classes")
    p.add_argument("--num-vertices", type=int, default=None, help="needed by gs-FC heads")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--task", choices=("vertex", "graph"), default="vertex")
    p.add_argument("--num-vertices", type=int, default=None, help="default 100 (vertex) or 12 (graph)")
    p.add_argument("--steps", type=int, default=6)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--drift", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--p-in", type=float, default=0.2)
    p.add_argument("--p-out", type=float, default=0.02)
    p.add_argument("--informative-steps", type=int, default=2)
    p.add_argument("--labeled-fraction", type=float, default=1.0)
    p.add_argument("--num-sequences", type=int, default=40)
    p.add_argument("--min-length", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


_CONFIG_KEYS = {"data", "out", "seed", "iterations", "test_frac", "val_frac", "iteration",
                "model", "models", "gc", "lstm", "fc", "dropout", "candidate_tanh", "epochs",
                "lr", "metric", "model_spec"}


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` so explicit flags still win."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CLIError(f"cannot read config {path}: {exc}") from None
    unknown = set(cfg) - _CONFIG_KEYS - {"train"}
    if unknown:
        raise CLIError(f"unknown config keys: {sorted(unknown)}")
    train_cfg = cfg.pop("train", {})
    for key, dest in (("lr", "lr"), ("max_epochs", "epochs"), ("metric", "metric")):
        if key in train_cfg:
            cfg.setdefault(dest, train_cfg[key])
    if cfg.get("metric") == "accuracy":
        cfg["metric"] = "acc"
    if isinstance(cfg.get("models"), list):
        cfg["models"] = ",".join(cfg["models"])
    if cfg.get("models") == "":
        cfg.pop("models")
    if "model_spec" in cfg and "model" not in cfg:
        cfg["model"] = cfg["model_spec"].get("name", "custom")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "train" and not args.out:
            raise CLIError("--out is required")
        return args.func(args)
    except (CLIError, DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
