"""Mixup operators and teacher label guessing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Ema


@dataclass
class MixedBatch:
    inputs: np.ndarray
    targets: np.ndarray
    lam: float
    perm: np.ndarray


def mix(x_a, x_b, lam: float):
    """Convex combination ``lam * x_a + (1 - lam) * x_b``."""
    x_a = np.asarray(x_a, dtype=np.float64)
    x_b = np.asarray(x_b, dtype=np.float64)
    if x_a.shape != x_b.shape:
        raise ValueError(f"cannot mix shapes {x_a.shape} and {x_b.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixing coefficient {lam} outside [0, 1]")
    return lam * x_a + (1.0 - lam) * x_b


def sample_lambda(alpha: float, rng: np.random.Generator) -> float:
    if alpha <= 0:
        raise ValueError("Beta shape alpha must be positive")
    return float(rng.beta(alpha, alpha))


def _check_perm(perm, n: int) -> np.ndarray:
    perm = np.asarray(perm)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError("r must be a permutation of range(B)")
    return perm


def guess_labels(teacher: Ema, x_u) -> np.ndarray:
    """Soft labels from the EMA teacher; no gradient path back to it."""
    return teacher.forward(x_u).copy()


def build_mixed_unlabeled(x_u, soft_labels, lam: float, perm) -> MixedBatch:
    x_u = np.asarray(x_u, dtype=np.float64)
    soft_labels = np.asarray(soft_labels, dtype=np.float64)
    if soft_labels.shape != (x_u.shape[0],):
        raise ValueError("one soft label per unlabeled row is required")
    perm = _check_perm(perm, x_u.shape[0])
    return MixedBatch(mix(x_u, x_u[perm], lam), mix(soft_labels, soft_labels[perm], lam), lam, perm)


def build_mixed_pn(x_p, x_n, lam: float, perm) -> MixedBatch:
    """Row i mixes positive i (target 1) with negative ``perm[i]`` (target 0)."""
    x_p = np.asarray(x_p, dtype=np.float64)
    x_n = np.asarray(x_n, dtype=np.float64)
    if x_p.shape != x_n.shape:
        raise ValueError(f"positive batch {x_p.shape} and negative batch {x_n.shape} differ")
    perm = _check_perm(perm, x_p.shape[0])
    targets = np.full(x_p.shape[0], lam, dtype=np.float64)
    return MixedBatch(mix(x_p, x_n[perm], lam), targets, lam, perm)
