"""Reliable-negative mining: pick a subset of U to stand in for negatives."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .data import PUDataset
from .nn import sigmoid

logger = logging.getLogger(__name__)

METHODS = ("rand", "dist", "ntc")


@dataclass(frozen=True)
class RnConfig:
    method: str = "rand"
    count: int | None = None  # None -> max(|P|, batch_size), capped at |U|
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown RN method {self.method!r}; choose from {METHODS}")


def _check_count(pu: PUDataset, count: int) -> np.ndarray:
    unl = pu.unlabeled_idx
    if count < 1:
        raise ValueError("reliable-negative count must be at least 1")
    if count > len(unl):
        raise ValueError(f"requested {count} reliable negatives from only {len(unl)} unlabeled rows")
    return unl


def _lowest(keys: np.ndarray, rows: np.ndarray, count: int) -> np.ndarray:
    # Smallest keys first; ties go to the lower row index.
    order = np.lexsort((rows, keys))
    return np.sort(rows[order[:count]])


def mine_rand(pu: PUDataset, count: int, seed: int = 0) -> np.ndarray:
    unl = _check_count(pu, count)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(unl, size=count, replace=False))


def mean_distance_to_positives(pu: PUDataset, rows=None, chunk: int = 4096) -> np.ndarray:
    """Mean Euclidean distance from each row to all labeled positives."""
    rows = pu.unlabeled_idx if rows is None else np.asarray(rows)
    xp = pu.x[pu.positive_idx]
    out = np.empty(len(rows))
    for start in range(0, len(rows), chunk):
        sl = slice(start, start + chunk)
        out[sl] = cdist(pu.x[rows[sl]], xp).mean(axis=1)
    return out


def mine_dist(pu: PUDataset, count: int) -> np.ndarray:
    """Unlabeled rows farthest (on average) from the labeled positives."""
    unl = _check_count(pu, count)
    if len(pu.positive_idx) == 0:
        raise ValueError("distance mining needs at least one labeled positive")
    dist = mean_distance_to_positives(pu, unl)
    return _lowest(-dist, unl, count)


class LogisticScorer:
    """Class-balanced logistic regression fitted by full-batch gradient descent."""

    def __init__(self, lr: float = 0.5, n_iter: int = 500, l2: float = 1e-3):
        self.lr = lr
        self.n_iter = n_iter
        self.l2 = l2

    def fit(self, x, t) -> "LogisticScorer":
        x = np.asarray(x, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        n_pos = t.sum()
        n_neg = len(t) - n_pos
        sample_w = np.where(t == 1, 0.5 / max(n_pos, 1), 0.5 / max(n_neg, 1))
        self.w = np.zeros(x.shape[1])
        self.b = 0.0
        for _ in range(self.n_iter):
            p = sigmoid(x @ self.w + self.b)
            r = sample_w * (p - t)
            self.w -= self.lr * (x.T @ r + self.l2 * self.w)
            self.b -= self.lr * r.sum()
            if not (np.all(np.isfinite(self.w)) and np.isfinite(self.b)):
                raise FloatingPointError("logistic discriminator diverged")
        return self

    def score(self, x) -> np.ndarray:
        return sigmoid(np.asarray(x, dtype=np.float64) @ self.w + self.b)


def mine_ntc(pu: PUDataset, count: int, seed: int = 0, scorer=None) -> np.ndarray:
    """Unlabeled rows a P-vs-U discriminator finds least positive.

    ``scorer`` needs ``fit(x, t)`` and ``score(x)``; the default is
    :class:`LogisticScorer`. If fitting diverges, falls back to random mining.
    """
    unl = _check_count(pu, count)
    scorer = scorer if scorer is not None else LogisticScorer()
    try:
        scorer.fit(pu.x, pu.s)
        scores = np.asarray(scorer.score(pu.x[unl]), dtype=np.float64)
        if not np.all(np.isfinite(scores)):
            raise FloatingPointError("discriminator produced non-finite scores")
    except FloatingPointError as exc:
        logger.warning("NTC discriminator failed (%s); falling back to random mining", exc)
        return mine_rand(pu, count, seed)
    return _lowest(scores, unl, count)


def default_count(pu: PUDataset, batch_size: int) -> int:
    return min(max(len(pu.positive_idx), batch_size), len(pu.unlabeled_idx))


def mine(pu: PUDataset, method: str = "rand", count: int | None = None, seed: int = 0, batch_size: int = 128) -> np.ndarray:
    if method not in METHODS:
        raise ValueError(f"unknown RN method {method!r}; choose from {METHODS}")
    count = default_count(pu, batch_size) if count is None else count
    if method == "rand":
        return mine_rand(pu, count, seed)
    if method == "dist":
        return mine_dist(pu, count)
    return mine_ntc(pu, count, seed)
