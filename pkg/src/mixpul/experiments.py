"""Repeated, seeded experiment runs with aggregation, tables and manifest replay."""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import supervised_baseline, train_nnpu, train_upu
from .data import LabeledDataset, load_mnist, load_uci, make_pu, pu_from_manifest
from .metrics import auc, error_rate
from .report import RunReport
from .training import TrainConfig, TrainingDiverged, train

logger = logging.getLogger(__name__)

TRAINERS = {
    "mixpul": train,
    "upu": train_upu,
    "nnpu": train_nnpu,
    "supervised": supervised_baseline,
}

_MNIST_NAME = re.compile(r"^mnist-(\d)v(\d)$")


def load_dataset(name: str, data_dir=None, split_seed: int = 0):
    """``(train, test)`` for a UCI name/CSV path or ``mnist-<pos>v<neg>``."""
    m = _MNIST_NAME.match(name)
    if m:
        return load_mnist(int(m.group(1)), int(m.group(2)), data_dir)
    train_ds, test_ds, _ = load_uci(name, data_dir, seed=split_seed)
    return train_ds, test_ds


def dataset_slug(dataset: str) -> str:
    """Directory-safe name for a dataset given by name or CSV path."""
    return Path(dataset).stem if ("/" in dataset or "\\" in dataset or dataset.endswith(".csv")) else dataset


@dataclass
class ExperimentSpec:
    dataset: str
    method: str = "mixpul"
    config: TrainConfig = field(default_factory=TrainConfig)
    repeats: int = 10
    master_seed: int = 0
    class_frequency: float | None = None
    n_labeled: int | None = None
    split_seed: int = 0
    label: str = ""

    def __post_init__(self):
        if self.method not in TRAINERS:
            raise ValueError(f"unknown method {self.method!r}; choose from {sorted(TRAINERS)}")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if (self.class_frequency is None) == (self.n_labeled is None):
            raise ValueError("give exactly one of class_frequency and n_labeled")

    def seed(self, repeat: int) -> int:
        return self.master_seed + repeat

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        amount = f"c{self.class_frequency}" if self.class_frequency is not None else f"P{self.n_labeled}"
        return f"{dataset_slug(self.dataset)}-{self.method}-{amount}"


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    reports: list
    failed: list

    def finals(self, key: str = "test_auc") -> np.ndarray:
        return np.array([r.final(key) for r in self.reports], dtype=np.float64)

    def summary(self, key: str = "test_auc") -> tuple[float, float]:
        vals = self.finals(key)
        if vals.size == 0:
            return math.nan, math.nan
        return float(vals.mean()), float(vals.std())

    def mean_curve(self, key: str = "test_auc") -> list:
        """Per-epoch mean over successful repeats (plot data)."""
        if not self.reports:
            return []
        n = min(len(r.epochs) for r in self.reports)
        return [float(np.mean([r.epochs[i][key] for r in self.reports])) for i in range(n)]

    def write(self, out_dir) -> Path:
        out = Path(out_dir) / self.spec.name
        out.mkdir(parents=True, exist_ok=True)
        for r in self.reports:
            seed = r.config["seed"]
            r.save(out / f"run-seed{seed}.json")
            r.write_csv(out / f"epochs-seed{seed}.csv")
            if r.trace:
                r.write_trace_csv(out / f"trace-seed{seed}.csv")
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["experiment", "method", "repeats_ok", "repeats_failed", "auc_mean", "auc_std", "error_mean", "error_std"])
            w.writerow([self.spec.name, self.spec.method, len(self.reports), len(self.failed), *self.summary("test_auc"), *self.summary("test_error")])
        with open(out / "curve.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "test_auc_mean", "test_error_mean"])
            for i, (a, e) in enumerate(zip(self.mean_curve("test_auc"), self.mean_curve("test_error")), start=1):
                w.writerow([i, repr(a), repr(e)])
        return out


def run_single(spec: ExperimentSpec, train_ds: LabeledDataset, test_ds: LabeledDataset, repeat: int) -> RunReport:
    seed = spec.seed(repeat)
    pu = make_pu(train_ds, spec.class_frequency, seed=seed, n_labeled=spec.n_labeled)
    config = spec.config.replace(seed=seed)
    result = TRAINERS[spec.method](pu, config, test_ds)
    report = result.report
    report.manifest["source"] = {"dataset": spec.dataset, "split_seed": spec.split_seed}
    if not report.epochs:
        # untrained run: record the initial model so the summary has a row
        scores = result.eval_net.forward(test_ds.x)
        report.epochs.append(
            {"epoch": 0, "iteration": 0, "train_error": error_rate(result.eval_net.forward(pu.x), pu.y), "test_error": error_rate(scores, test_ds.y), "test_auc": auc(scores, test_ds.y)}
        )
    return report


def run_experiment(spec: ExperimentSpec, data_dir=None, out_dir=None, datasets=None) -> ExperimentResult:
    """Run ``spec.repeats`` seeded repeats; diverged repeats are logged and excluded.

    ``datasets`` may pass a preloaded ``(train, test)`` pair.
    """
    train_ds, test_ds = datasets or load_dataset(spec.dataset, data_dir, spec.split_seed)
    reports, failed = [], []
    for k in range(spec.repeats):
        try:
            reports.append(run_single(spec, train_ds, test_ds, k))
        except TrainingDiverged as exc:
            logger.warning("%s: repeat with seed %d diverged (%s); excluded from aggregation", spec.name, spec.seed(k), exc)
            failed.append(exc.report)
    result = ExperimentResult(spec, reports, failed)
    if out_dir is not None:
        result.write(out_dir)
    return result


def replay(report: RunReport, data_dir=None, datasets=None) -> RunReport:
    """Re-run a finished run from its manifest and stored configuration."""
    source = report.manifest["source"]
    train_ds, test_ds = datasets or load_dataset(source["dataset"], data_dir, source["split_seed"])
    pu = pu_from_manifest(train_ds, report.manifest["split"])
    config = TrainConfig.from_dict(dict(report.config))
    result = TRAINERS[report.method](pu, config, test_ds)
    result.report.manifest["source"] = dict(source)
    return result.report


def epochs_to_reach(report: RunReport, threshold: float, key: str = "test_auc") -> float:
    """First (possibly fractional) epoch at which ``key`` reaches ``threshold``; inf if never."""
    points = [(p["epoch"], p[key]) for p in report.trace] or [(r["epoch"], r[key]) for r in report.epochs]
    for epoch, value in points:
        if value >= threshold:
            return float(epoch)
    return math.inf


# ------------------------------------------------------------------ suites

RN_METHODS = ("rand", "dist", "ntc")
RN_POSITIVES = (5, 25, 50, 100)
CLASS_FREQUENCIES = (0.01, 0.05, 0.1, 0.2, 0.4)
PRIOR_MULTIPLIERS = (0.5, 1.0, 2.0)


def _fmt(mean: float, std: float) -> str:
    return f"{mean:.2f}±{std:.2f}"


def write_table(path, row_label: str, columns, rows: dict) -> None:
    """``rows`` maps a row name to ``{column: (mean, std)}``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([row_label, *columns])
        for name, cells in rows.items():
            w.writerow([name, *(_fmt(*cells[c]) if c in cells else "" for c in columns)])


def rn_methods_suite(dataset="titanic", config=None, repeats=10, positives=RN_POSITIVES, methods=RN_METHODS, data_dir=None, out_dir=None):
    """AUC for each mining method and labeled-set size (methods x |P| table)."""
    config = config or TrainConfig()
    datasets = load_dataset(dataset, data_dir)
    rows = {}
    for method in methods:
        rows[method] = {}
        for n_p in positives:
            spec = ExperimentSpec(dataset, "mixpul", config.replace(rn_method=method), repeats, n_labeled=n_p, label=f"{dataset_slug(dataset)}-rn-{method}-P{n_p}")
            rows[method][n_p] = run_experiment(spec, out_dir=out_dir, datasets=datasets).summary()
    if out_dir is not None:
        write_table(Path(out_dir) / "rn_methods.csv", "method", positives, {m.capitalize() if m != "ntc" else "NTC": v for m, v in rows.items()})
    return rows


def _ablation(dataset, variants: dict, n_labeled, config, repeats, data_dir, out_dir, tag):
    datasets = load_dataset(dataset, data_dir)
    results = {}
    for name, changes in variants.items():
        spec = ExperimentSpec(dataset, "mixpul", config.replace(**changes), repeats, n_labeled=n_labeled, label=f"{dataset_slug(dataset)}-{tag}-{name}")
        results[name] = run_experiment(spec, out_dir=out_dir, datasets=datasets)
    if out_dir is not None:
        _write_curves(Path(out_dir) / f"{tag}_curves.csv", results)
    return results


def _write_curves(path, results: dict) -> None:
    names = list(results)
    curves = {n: (results[n].mean_curve("test_error"), results[n].mean_curve("test_auc")) for n in names}
    n_epochs = min(len(c[0]) for c in curves.values()) if curves else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", *(f"{n}_test_error" for n in names), *(f"{n}_test_auc" for n in names)])
        for i in range(n_epochs):
            w.writerow([i + 1, *(repr(curves[n][0][i]) for n in names), *(repr(curves[n][1][i]) for n in names)])


def mixup_suite(dataset="mnist-0v1", n_labeled=1200, config=None, repeats=1, data_dir=None, out_dir=None):
    """Training with and without the unlabeled interpolation-consistency term."""
    variants = {"with_mixup": {}, "without_mixup": {"beta": 0.0}}
    return _ablation(dataset, variants, n_labeled, config or TrainConfig(), repeats, data_dir, out_dir, "mixup")


def margin_suite(dataset="mnist-0v1", n_labeled=1200, config=None, repeats=1, data_dir=None, out_dir=None):
    """Training with and without the positive-vs-unlabeled margin loss."""
    variants = {"with_margin": {}, "without_margin": {"gamma": 0.0}}
    return _ablation(dataset, variants, n_labeled, config or TrainConfig(), repeats, data_dir, out_dir, "margin")


def class_frequency_suite(dataset="spambase", values=CLASS_FREQUENCIES, methods=("mixpul", "upu", "nnpu", "supervised"), config=None, repeats=10, data_dir=None, out_dir=None):
    """AUC of each method across class frequencies (methods x c table)."""
    config = config or TrainConfig()
    datasets = load_dataset(dataset, data_dir)
    rows = {}
    for method in methods:
        rows[method] = {}
        for c in values:
            spec = ExperimentSpec(dataset, method, config, repeats, class_frequency=c, label=f"{dataset_slug(dataset)}-{method}-c{c}")
            rows[method][c] = run_experiment(spec, out_dir=out_dir, datasets=datasets).summary()
    if out_dir is not None:
        write_table(Path(out_dir) / "class_frequency.csv", "method", values, rows)
    return rows


def prior_suite(dataset="titanic", class_frequency=0.4, multipliers=PRIOR_MULTIPLIERS, config=None, repeats=3, data_dir=None, out_dir=None):
    """nnPU and MixPUL fed a scaled class prior; MixPUL never reads it."""
    config = config or TrainConfig()
    datasets = load_dataset(dataset, data_dir)
    rows = {"nnpu": {}, "mixpul": {}}
    results = {}
    for method in rows:
        for m in multipliers:
            spec = ExperimentSpec(dataset, method, config.replace(pi_multiplier=m), repeats, class_frequency=class_frequency, label=f"{dataset_slug(dataset)}-{method}-pi{m}")
            res = run_experiment(spec, out_dir=out_dir, datasets=datasets)
            results[(method, m)] = res
            rows[method][m] = res.summary()
    if out_dir is not None:
        write_table(Path(out_dir) / "prior_sweep.csv", "method", multipliers, rows)
    return results
