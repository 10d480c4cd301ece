"""Command-line entry point: ``mixpul <command> ...``.

Every command exits 0 on success. Failures print one JSON line prefixed with
``error:`` on stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments, fetch
from .data import apply_scaler, default_data_dir, load_csv, load_manifest, load_uci, make_pu, pu_from_manifest, save_manifest
from .experiments import TRAINERS, load_dataset
from .metrics import auc, error_rate
from .nn import load_checkpoint, save_checkpoint
from .training import TrainConfig, dump_config, load_config

logger = logging.getLogger("mixpul")


def _config(args, **overrides) -> TrainConfig:
    if overrides.get("seed") is None:
        overrides.pop("seed", None)
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if args.config:
        return load_config(args.config, **overrides)
    return TrainConfig(**overrides)


def _amount(args) -> dict:
    if args.n_labeled is not None:
        return {"n_labeled": args.n_labeled}
    return {"class_frequency": args.class_frequency}


def _datasets_with_scaler(name: str, data_dir):
    """Like :func:`load_dataset` but also returns the scaler used (None for images)."""
    if name.startswith("mnist-"):
        return (*load_dataset(name, data_dir), None)
    return load_uci(name, data_dir)


def cmd_train(args) -> dict:
    cfg = _config(args, seed=args.seed)
    train_ds, test_ds, scaler = _datasets_with_scaler(args.dataset, args.data_dir)
    if args.manifest:
        pu = pu_from_manifest(train_ds, load_manifest(args.manifest))
    else:
        amount = _amount(args)
        pu = make_pu(train_ds, amount.get("class_frequency"), seed=cfg.seed, n_labeled=amount.get("n_labeled"))
    result = TRAINERS[args.method](pu, cfg, test_ds)
    report = result.report
    report.manifest["source"] = {"dataset": args.dataset, "split_seed": 0}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.eval_net, out / "model.ckpt")
    save_checkpoint(result.model, out / "student.ckpt")
    (out / "scaler.json").write_text(json.dumps(scaler if scaler is not None else {"kind": "pixels"}))
    dump_config(cfg, out / "config.txt")
    save_manifest(report.manifest, out / "manifest.json")
    report.save(out / "report.json")
    report.write_csv(out / "epochs.csv")
    if report.trace:
        report.write_trace_csv(out / "trace.csv")
    return {"out": str(out), "test_auc": report.final("test_auc"), "test_error": report.final("test_error")}


def cmd_eval(args) -> dict:
    model = load_checkpoint(args.model)
    ds = load_csv(args.dataset, args.label_column)
    scaler_path = Path(args.scaler) if args.scaler else Path(args.model).with_name("scaler.json")
    if scaler_path.exists():
        scaler = json.loads(scaler_path.read_text())
        if "mean" in scaler:
            ds = apply_scaler(ds, scaler)
    scores = model.forward(ds.x)
    with open(args.out, "w") as fh:
        fh.write("row,score,label\n")
        for i, (s, y) in enumerate(zip(scores, ds.y)):
            fh.write(f"{i},{float(s)!r},{y}\n")
    out = {"rows": len(ds), "test_error": error_rate(scores, ds.y)}
    if 0 < ds.y.sum() < len(ds):
        out["test_auc"] = auc(scores, ds.y)
    return out


def cmd_simulate(args) -> dict:
    train_ds, _ = load_dataset(args.dataset, args.data_dir)
    amount = _amount(args)
    pu = make_pu(train_ds, amount.get("class_frequency"), seed=args.seed, n_labeled=amount.get("n_labeled"))
    manifest = pu.manifest()
    save_manifest(manifest, args.out)
    return {"out": args.out, "labeled": int(pu.s.sum()), "unlabeled": int((pu.s == 0).sum()), "prior": pu.prior, "class_frequency": pu.class_frequency}


def cmd_ablate(args) -> dict:
    cfg = _config(args)
    common = {"config": cfg, "repeats": args.repeats, "data_dir": args.data_dir, "out_dir": args.out}
    Path(args.out).mkdir(parents=True, exist_ok=True)
    if args.suite == "rn-methods":
        rows = experiments.rn_methods_suite(args.dataset or "titanic", **common)
        return {"suite": args.suite, "table": {m: {str(k): v for k, v in r.items()} for m, r in rows.items()}}
    suite = experiments.mixup_suite if args.suite == "mixup" else experiments.margin_suite
    results = suite(args.dataset or "mnist-0v1", n_labeled=args.n_labeled or 1200, **common)
    return {"suite": args.suite, "final_error": {k: r.summary("test_error") for k, r in results.items()}}


def cmd_sweep(args) -> dict:
    cfg = _config(args)
    values = [float(v) for v in args.values.split(",")] if args.values else None
    Path(args.out).mkdir(parents=True, exist_ok=True)
    common = {"config": cfg, "repeats": args.repeats, "data_dir": args.data_dir, "out_dir": args.out}
    if args.suite == "class-frequency":
        methods = tuple(args.methods.split(","))
        rows = experiments.class_frequency_suite(args.dataset or "spambase", values or experiments.CLASS_FREQUENCIES, methods, **common)
        return {"suite": args.suite, "table": {m: {str(k): v for k, v in r.items()} for m, r in rows.items()}}
    results = experiments.prior_suite(args.dataset or "titanic", multipliers=values or experiments.PRIOR_MULTIPLIERS, **common)
    return {"suite": args.suite, "auc": {f"{m}@{k}": r.summary() for (m, k), r in results.items()}}


def cmd_fetch(args) -> dict:
    fetch.fetch_all(args.data_dir, skip_existing=not args.force)
    return {"data_dir": str(args.data_dir)}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixpul", description=__doc__.splitlines()[0])
    p.add_argument("--data-dir", default=None, help="dataset directory (default: $MIXPUL_DATA_DIR or ./data)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def amount_args(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--class-frequency", type=float, default=0.2)
        g.add_argument("--n-labeled", type=int, default=None)

    t = sub.add_parser("train", help="train one model")
    t.add_argument("--dataset", required=True, help="UCI name, CSV path or mnist-<pos>v<neg>")
    t.add_argument("--method", choices=sorted(TRAINERS), default="mixpul")
    t.add_argument("--config", default=None, help="flat key = value file")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--manifest", default=None, help="reuse a PU split written by `simulate`")
    t.add_argument("--out", required=True)
    amount_args(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a labeled CSV with a checkpoint")
    e.add_argument("--model", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--scaler", default=None, help="defaults to scaler.json next to the checkpoint")
    e.add_argument("--label-column", default="label")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("simulate", help="write a PU split manifest")
    s.add_argument("--dataset", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    amount_args(s)
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("ablate", help="run an ablation suite")
    a.add_argument("--suite", choices=("rn-methods", "mixup", "margin"), required=True)
    a.add_argument("--dataset", default=None)
    a.add_argument("--config", default=None)
    a.add_argument("--epochs", type=int, default=None)
    a.add_argument("--repeats", type=int, default=None)
    a.add_argument("--n-labeled", type=int, default=None)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_ablate)

    w = sub.add_parser("sweep", help="run a class-frequency or class-prior sweep")
    w.add_argument("--suite", choices=("class-frequency", "prior"), required=True)
    w.add_argument("--values", default=None, help="comma-separated values")
    w.add_argument("--dataset", default=None)
    w.add_argument("--methods", default="mixpul,upu,nnpu,supervised")
    w.add_argument("--config", default=None)
    w.add_argument("--epochs", type=int, default=None)
    w.add_argument("--repeats", type=int, default=None)
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fetch-data", help="download the benchmark datasets")
    f.add_argument("--force", action="store_true")
    f.set_defaults(func=cmd_fetch)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.data_dir is None:
        args.data_dir = default_data_dir()
    if getattr(args, "repeats", 0) is None:
        args.repeats = 1 if getattr(args, "suite", "") in ("mixup", "margin") else 10
    try:
        summary = args.func(args)
    except Exception as exc:  # reported as a machine-readable line
        print("error: " + json.dumps({"command": args.command, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(summary, default=_json_default))
    return 0


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


if __name__ == "__main__":
    sys.exit(main())
