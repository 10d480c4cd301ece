"""Per-run records and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

EPOCH_COLUMNS = ("epoch", "iteration", "L_PN", "L_U", "L_PU", "loss", "train_error", "test_error", "test_auc")
TRACE_COLUMNS = ("iteration", "epoch", "test_error", "test_auc")


@dataclass
class RunReport:
    method: str
    config: dict
    manifest: dict = field(default_factory=dict)
    epochs: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    status: str = "ok"
    notes: list = field(default_factory=list)

    def final(self, key: str = "test_auc") -> float:
        if not self.epochs:
            return math.nan
        return self.epochs[-1][key]

    def column(self, key: str) -> list:
        return [row[key] for row in self.epochs]

    def write_csv(self, path) -> None:
        _write_rows(path, EPOCH_COLUMNS, self.epochs)

    def write_trace_csv(self, path) -> None:
        _write_rows(path, TRACE_COLUMNS, self.trace)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "config": self.config,
            "manifest": self.manifest,
            "status": self.status,
            "notes": self.notes,
            "epochs": self.epochs,
            "trace": self.trace,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(d["method"], d["config"], d.get("manifest", {}), d.get("epochs", []), d.get("trace", []), d.get("status", "ok"), d.get("notes", []))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), allow_nan=True))

    @classmethod
    def load(cls, path) -> "RunReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _fmt(v):
    if isinstance(v, float):
        return repr(float(v))  # round-trips bit-exactly
    return v


def _write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, math.nan)) for c in columns])
