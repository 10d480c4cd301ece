"""Dataset ingestion, PU-problem simulation and mini-batch sampling."""

from __future__ import annotations

import csv
import gzip
import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# Training-set sizes of the UCI benchmarks; remaining rows form the test split.
UCI_TRAIN_SIZES = {"titanic": 1540, "spambase": 3220}


class DataFormatError(ValueError):
    """Raised for malformed CSV or IDX input."""


@dataclass(frozen=True)
class LabeledDataset:
    x: np.ndarray
    y: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ValueError(f"features {self.x.shape} and labels {self.y.shape} disagree")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("features contain non-finite values")
        if not np.all(np.isin(self.y, (0, 1))):
            raise ValueError("labels must be 0 or 1")

    def __len__(self):
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.x[idx], self.y[idx], self.name)


@dataclass(frozen=True)
class PUDataset:
    """Features with observed labels ``s``; ``y`` is hidden ground truth.

    ``y``, ``prior`` and ``class_frequency`` are recorded for evaluation and
    for the prior-dependent baselines only. MixPUL training reads ``x`` and
    ``s`` exclusively.
    """

    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    prior: float
    class_frequency: float
    name: str = "dataset"
    seed: int | None = None

    def __post_init__(self):
        if np.any((self.s == 1) & (self.y != 1)):
            raise ValueError("a labeled example is not a true positive")

    def __len__(self):
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    @property
    def positive_idx(self) -> np.ndarray:
        return np.flatnonzero(self.s == 1)

    @property
    def unlabeled_idx(self) -> np.ndarray:
        return np.flatnonzero(self.s == 0)

    def manifest(self) -> dict:
        """Sidecar record that reconstructs this split from its source dataset."""
        return {
            "dataset": self.name,
            "seed": self.seed,
            "class_frequency": self.class_frequency,
            "prior": self.prior,
            "labeled_indices": self.positive_idx.tolist(),
        }


# ---------------------------------------------------------------- ingestion


def load_csv(path, label_column: str = "label", name: str | None = None) -> LabeledDataset:
    """Read a comma-separated numeric table with a header row.

    Features are returned raw; see :func:`standardize`.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataFormatError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataFormatError(f"{path}: no label column {label_column!r} in header {header}")
        li = header.index(label_column)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(table)):
        raise DataFormatError(f"{path}: missing or non-finite values")
    y = table[:, li]
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise DataFormatError(f"{path}: labels must be 0 or 1")
    x = np.delete(table, li, axis=1)
    return LabeledDataset(x, y.astype(np.int64), name or path.stem)


def train_test_split(ds: LabeledDataset, n_train: int, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    if not 0 < n_train < len(ds):
        raise ValueError(f"n_train must lie in (0, {len(ds)})")
    perm = np.random.default_rng(seed).permutation(len(ds))
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


def standardize(train: LabeledDataset, *others: LabeledDataset):
    """Zero-mean/unit-variance scaling fitted on ``train``; constant columns become 0."""
    mean = train.x.mean(axis=0)
    std = train.x.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    scaler = {"mean": mean.tolist(), "scale": scale.tolist(), "constant": (std == 0).tolist()}
    return [apply_scaler(d, scaler) for d in (train, *others)], scaler


def apply_scaler(ds: LabeledDataset, scaler: dict) -> LabeledDataset:
    """Apply a scaler returned by :func:`standardize` to another table."""
    mean = np.asarray(scaler["mean"], dtype=np.float64)
    if ds.n_features != mean.size:
        raise DataFormatError(f"scaler expects {mean.size} features, table has {ds.n_features}")
    x = (ds.x - mean) / np.asarray(scaler["scale"], dtype=np.float64)
    x[:, np.asarray(scaler["constant"], dtype=bool)] = 0.0
    return LabeledDataset(x, ds.y, ds.name)


def load_uci(name_or_path, data_dir=None, seed: int = 0, label_column: str = "label"):
    """Load a UCI table, split it and standardize it on the training part.

    Returns ``(train, test, scaler)``. Known benchmarks use their published
    training-set size; any other table gets a 70/30 split.
    """
    path = Path(name_or_path)
    if not path.suffix:
        path = Path(data_dir or default_data_dir()) / f"{name_or_path}.csv"
    ds = load_csv(path, label_column)
    n_train = UCI_TRAIN_SIZES.get(ds.name, int(round(0.7 * len(ds))))
    train, test = train_test_split(ds, n_train, seed)
    (train, test), scaler = standardize(train, test)
    return train, test, scaler


def default_data_dir() -> Path:
    return Path(os.environ.get("MIXPUL_DATA_DIR", "data"))


def _open_maybe_gz(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path, expected_magic: int) -> np.ndarray:
    """Read an unsigned-byte IDX file (optionally gzip-compressed)."""
    with _open_maybe_gz(path) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise DataFormatError(f"{path}: truncated header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise DataFormatError(f"{path}: bad magic number 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = math.prod(dims)
    if len(raw) - header != count:
        raise DataFormatError(f"{path}: payload has {len(raw) - header} bytes, expected {count}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_mnist_pair(images_path, labels_path, positive_digit: int, negative_digit: int) -> LabeledDataset:
    """Keep two digits of an MNIST IDX pair; ``positive_digit`` maps to label 1."""
    if positive_digit == negative_digit:
        raise ValueError("positive and negative digit must differ")
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError("image and label counts differ")
    keep = np.flatnonzero((labels == positive_digit) | (labels == negative_digit))
    x = images[keep].reshape(len(keep), -1).astype(np.float64) / 255.0
    y = (labels[keep] == positive_digit).astype(np.int64)
    return LabeledDataset(x, y, f"mnist-{positive_digit}v{negative_digit}")


def load_mnist(positive_digit: int, negative_digit: int, data_dir=None):
    """Train/test :class:`LabeledDataset` pair for one MNIST digit task."""
    root = Path(data_dir or default_data_dir()) / "mnist"

    def find(stem):
        for cand in (root / f"{stem}.gz", root / stem):
            if cand.exists():
                return cand
        raise FileNotFoundError(f"{root}/{stem}[.gz] not found; run `mixpul fetch-data`")

    train = load_mnist_pair(find("train-images.idx3-ubyte"), find("train-labels.idx1-ubyte"), positive_digit, negative_digit)
    test = load_mnist_pair(find("t10k-images.idx3-ubyte"), find("t10k-labels.idx1-ubyte"), positive_digit, negative_digit)
    return train, test


# ------------------------------------------------------------ PU simulation


def _pu_from_labeled(ds: LabeledDataset, labeled: np.ndarray, seed) -> PUDataset:
    s = np.zeros(len(ds), dtype=np.int64)
    s[labeled] = 1
    unl = s == 0
    n_unl = int(unl.sum())
    prior = float(ds.y[unl].sum() / n_unl) if n_unl else 0.0
    n_p = len(labeled)
    c = n_p / (n_p + prior * n_unl)
    return PUDataset(ds.x, s, ds.y.copy(), prior, c, ds.name, seed)


def make_pu(ds: LabeledDataset, class_frequency: float | None = None, seed: int = 0, *, n_labeled: int | None = None) -> PUDataset:
    """Label a random subset of the true positives; everything else is unlabeled.

    All negatives stay in the unlabeled pool, so ``pi * |U|`` equals the number
    of hidden positives and the realised class frequency is
    ``|P| / n_positive``. Give either ``class_frequency`` or ``n_labeled``.
    """
    pos = np.flatnonzero(ds.y == 1)
    if (class_frequency is None) == (n_labeled is None):
        raise ValueError("give exactly one of class_frequency and n_labeled")
    if n_labeled is None:
        if not 0 < class_frequency <= 1:
            raise ValueError(f"class frequency {class_frequency} outside (0, 1]")
        n_labeled = int(round(class_frequency * len(pos)))
    if not 1 <= n_labeled <= len(pos):
        raise ValueError(f"cannot label {n_labeled} of {len(pos)} positives")
    rng = np.random.default_rng(seed)
    labeled = np.sort(rng.choice(pos, size=n_labeled, replace=False))
    return _pu_from_labeled(ds, labeled, seed)


def pu_from_manifest(ds: LabeledDataset, manifest: dict) -> PUDataset:
    labeled = np.asarray(manifest["labeled_indices"], dtype=np.int64)
    if np.any(ds.y[labeled] != 1):
        raise ValueError("manifest labels a true negative; wrong source dataset?")
    return _pu_from_labeled(ds, labeled, manifest.get("seed"))


def save_manifest(manifest: dict, path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=1))


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------- batching


@dataclass
class TrainBatch:
    x_p: np.ndarray
    x_n: np.ndarray | None
    x_u: np.ndarray
    idx_p: np.ndarray = field(repr=False, default=None)
    idx_n: np.ndarray | None = field(repr=False, default=None)
    idx_u: np.ndarray = field(repr=False, default=None)


class _PoolCycler:
    """Draws fixed-size index chunks from a pool.

    Pools at least as large as the batch are walked through reshuffled passes
    (without replacement inside a pass); smaller pools are sampled with
    replacement.
    """

    def __init__(self, pool: np.ndarray, batch_size: int, rng: np.random.Generator):
        self.pool = pool
        self.batch_size = batch_size
        self.rng = rng
        self._order = np.empty(0, dtype=np.int64)
        self._pos = 0

    def next(self) -> np.ndarray:
        if len(self.pool) < self.batch_size:
            return self.rng.choice(self.pool, size=self.batch_size, replace=True)
        if self._pos + self.batch_size > len(self._order):
            self._order = np.concatenate([self._order[self._pos:], self.rng.permutation(self.pool)])
            self._pos = 0
        out = self._order[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return out


class BatchSampler:
    """Yields aligned (P, N, U) mini-batches for one training run.

    An epoch is ``ceil(|U| / B)`` steps and visits every unlabeled row at
    least once; the final chunk is topped up with random unlabeled rows.
    """

    def __init__(self, pu: PUDataset, rn_indices, batch_size: int, rng: np.random.Generator):
        self.pu = pu
        self.batch_size = batch_size
        self.rng = rng
        self.p_pool = pu.positive_idx
        self.u_pool = pu.unlabeled_idx
        if len(self.p_pool) == 0:
            raise ValueError("PU dataset has no labeled positives")
        if len(self.u_pool) == 0:
            raise ValueError("PU dataset has no unlabeled rows")
        self._p = _PoolCycler(self.p_pool, batch_size, rng)
        self.set_negatives(rn_indices)

    def set_negatives(self, rn_indices) -> None:
        if rn_indices is None or len(rn_indices) == 0:
            self.n_pool = None
            self._n = None
            return
        rn = np.asarray(rn_indices, dtype=np.int64)
        if np.any(self.pu.s[rn] == 1):
            raise ValueError("reliable negatives overlap the labeled positives")
        self.n_pool = rn
        self._n = _PoolCycler(rn, self.batch_size, self.rng)

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(len(self.u_pool) / self.batch_size)

    def epoch(self):
        B = self.batch_size
        order = self.rng.permutation(self.u_pool)
        for k in range(self.steps_per_epoch):
            idx_u = order[k * B : (k + 1) * B]
            if len(idx_u) < B:
                idx_u = np.concatenate([idx_u, self.rng.choice(self.u_pool, size=B - len(idx_u), replace=len(self.u_pool) < B)])
            idx_p = self._p.next()
            idx_n = self._n.next() if self._n is not None else None
            x = self.pu.x
            yield TrainBatch(
                x[idx_p], None if idx_n is None else x[idx_n], x[idx_u], idx_p, idx_n, idx_u
            )


def sample_batch(pu: PUDataset, rn_indices, batch_size: int, rng: np.random.Generator) -> TrainBatch:
    """Single independent draw of a (P, N, U) batch."""
    return next(BatchSampler(pu, rn_indices, batch_size, rng).epoch())


# ---------------------------------------------------------------- synthetic


def gaussian_mixture(n: int, prior: float = 0.5, d: int = 2, separation: float = 3.0, seed: int = 0) -> LabeledDataset:
    """Two isotropic Gaussians whose means differ by ``separation`` along every axis / sqrt(d)."""
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < prior).astype(np.int64)
    shift = separation / np.sqrt(d)
    x = rng.standard_normal((n, d)) + np.where(y[:, None] == 1, shift / 2, -shift / 2)
    return LabeledDataset(x, y, "gaussian")
